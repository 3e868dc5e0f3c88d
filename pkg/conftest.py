"""Test configuration: the project root is on sys.path, so tests import src and settings directly."""
