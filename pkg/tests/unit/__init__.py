"""Unit tests for the AWS Feature Notifier."""
