#!/usr/bin/env python3

# Copyright (C) 2021 The hrcae Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
This script builds source and wheel distributions of hrcae. The output is
put in dist/
"""

from setuptools import setup
from hrcae.version import __version__ as VERSION

with open('requirements.txt') as f:
  install_requires = [line.strip() for line in f
                      if line.strip() and not line.startswith('#')]

setup(
    version=VERSION,
    name='hrcae',
    maintainer='Multiple',
    description='Contrastive auto-encoders for heart-rate based detection '
        'of symptomatic periods',
    long_description='This package provides a pipeline that turns wearable '
        'heart-rate recordings into 14-day segments, trains convolutional '
        'auto-encoders and classifiers on them with a small numpy autodiff '
        'engine and evaluates them with leave-one-subject-out '
        'cross-validation. It includes a synthetic cohort generator and the '
        'hrcaetool.py command line tool.',
    platforms='OS Independent',
    license='Apache License, Version 2.0',
    packages=['hrcae'],
    scripts=['hrcaetool.py'],
    install_requires=install_requires,
    python_requires='>=3.8',
    zip_safe=False,
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: Apache Software License',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Medical Science Apps.',
        ],
    )
