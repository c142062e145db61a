"""Bundled simulation design files (``key = value`` text)."""
