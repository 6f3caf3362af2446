"""Test package for Lead Agent."""
