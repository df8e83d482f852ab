#!/usr/bin/env python
from setuptools import setup
from trajsynth.version import __version__

setup(name='trajsynth',
      version=__version__,
      description='Map-conditioned trajectory generation, mobility '
                  'baselines and cellular network simulation.',
      long_description_content_type="text/x-rst",
      long_description=open('README.rst', 'r').read(),
      test_suite='tests',
      packages=['trajsynth'],
      python_requires='>=3.8',
      install_requires=[
          'numpy>=1.20',
          'scipy>=1.7',
          'torch>=1.10',
          'networkx>=2.5',
          'POT>=0.9',
          'numba>=0.55',
          'Pillow>=8.0',
          'packaging',
      ],
      entry_points={
          'console_scripts': ['trajsynth = trajsynth.cli:main'],
      },
      classifiers=[
          'Development Status :: 3 - Alpha',
          'License :: OSI Approved :: GNU General Public License v3 (GPLv3)',
          'Programming Language :: Python :: 3',
          'Topic :: Scientific/Engineering',
          'Topic :: Scientific/Engineering :: Artificial Intelligence',
      ]
      )
