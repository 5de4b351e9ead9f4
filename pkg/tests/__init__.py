"""Tests for pcharts."""
