"""Test package for lesets."""
