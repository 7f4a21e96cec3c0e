# encoding: utf-8
"""Semantic localization namespace."""

__import__("pkg_resources").declare_namespace(__name__)
