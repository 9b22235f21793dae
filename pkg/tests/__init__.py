"""
Test suite for backdoor_cert

Usage:
    pytest                          # Run all tests
    pytest tests/unit/              # Run unit tests only
    pytest tests/integration/       # Run the CLI end-to-end tests
    pytest -k "radius"              # Run tests matching pattern
"""
