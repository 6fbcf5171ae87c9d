#! /usr/bin/env python
#
# License: MIT
from setuptools import setup, find_packages

PACKAGE_NAME = 'empbase'
DESCRIPTION = (
    "A base implementation of a trait and state emotion model for "
    "empathetic response generation, written over numpy."
)
with open('README.md') as fobj:
    LONG_DESCRIPTION = fobj.read()

LICENSE = "MIT"
PYTHON_REQUIRES = ">=3.7"
INSTALL_REQUIRES = ["numpy>=1.17", "sqlalchemy>=1.3,<2.0", "tqdm>=4.40"]
EXTRAS_REQUIRE = {
    "dev": "unittest"
}
ENTRY_POINTS = {
    "console_scripts": ["empbase=empbase.cli:main"],
}
CLASSIFIERS = [
    "Development Status :: 3 - Alpha",
    "Intended Audience :: Science/Research",
    "License :: OSI Approved :: MIT License",
    "Topic :: Scientific/Engineering :: Artificial Intelligence",
    "Programming Language :: Python",
    "Programming Language :: Python :: 3.7",
    "Programming Language :: Python :: 3.8",
    "Programming Language :: Python :: 3.9",
]

__version__ = None
exec(open("empbase/_version.py", encoding="utf-8").read())

setup(
    name=PACKAGE_NAME,
    version=__version__,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    license=LICENSE,
    python_requires=PYTHON_REQUIRES,
    install_requires=INSTALL_REQUIRES,
    extras_require=EXTRAS_REQUIRE,
    entry_points=ENTRY_POINTS,
    include_package_data=True,
    classifiers=CLASSIFIERS,
    packages=find_packages(exclude=([
        "*.tests", "*.tests.*", "tests.*", "tests"]))
)
