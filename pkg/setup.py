#!/usr/bin/env python

from setuptools import setup

setup(name='mmflow',
      version='1.0.0',
      description='Minimizing-movements curvature flows on pixel grids with exact min-cut steps',
      packages=['mmflow'],
      package_data={'mmflow': ['presets/*.ini']},
      author='mmflow developers',
      scripts=['bin/mmflow'],
      install_requires=['numpy', 'scipy', 'networkx', 'retrying', 'tabulate', 'six'],
      extras_require={'test': ['pytest']})
