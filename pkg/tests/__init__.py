"""Pytest package marker. Common tests live in tests/common/."""
