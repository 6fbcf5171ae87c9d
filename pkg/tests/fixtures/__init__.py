# tests/fixtures/__init__.py
