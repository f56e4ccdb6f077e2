"""Repositories: spec documents and report files."""
