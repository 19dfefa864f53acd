"""Test package for the AWS Feature Notifier."""
