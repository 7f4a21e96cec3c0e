# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Path setup --------------------------------------------------------------

import os
import sys

sys.path.insert(0, os.path.abspath('../../src'))


# -- Project information -----------------------------------------------------

with open(os.path.join(os.path.dirname(__file__), '..', '..', 'src', 'semloc', 'smcl', 'VERSION.txt')) as _file:
    release = _file.read().strip()

project = 'semloc.smcl'
copyright = '2026, the semloc developers'
author = 'the semloc developers'
version = release


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.autosummary',
    'sphinx_rtd_theme'
]

templates_path = ['_templates']
exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_context = {
    'display_github': True,
    "github_user": "semloc",
    "github_repo": "semloc-smcl",
    "github_version": "main/docs/source/"
}
html_theme_options = {
    'canonical_url': '',
    'logo_only': False,
    'display_version': True,
    'prev_next_buttons_location': 'bottom',
    'style_external_links': False,
    'collapse_navigation': True,
    'sticky_navigation': True,
    'navigation_depth': 4,
    'includehidden': True,
    'titles_only': False
}
