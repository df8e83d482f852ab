# -*- coding: utf-8 -*-
#
# Sphinx configuration for trajsynth.

import os
import sys

sys.path.insert(0, os.path.abspath('../..'))

from trajsynth.version import __version__  # noqa: E402

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
]

master_doc = 'index'
project = u'trajsynth'
copyright = u'2026, trajsynth developers'
author = u'trajsynth developers'
release = __version__
version = '.'.join(__version__.split('.')[:2])

pygments_style = 'sphinx'
html_theme = 'sphinx_rtd_theme'
html_show_sourcelink = False
