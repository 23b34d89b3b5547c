#!/usr/bin/env python
#-*- coding:utf-8 -*-

from setuptools import setup, find_packages

setup(
    name = "omi_rdsgan",
    version = "0.1.0",
    keywords = ("relation_extraction","distant_supervision","gan","attention"),
    description = "Rank-based distant supervision relation extraction with a triplet-seeded GAN",
    long_description = "Bag-level relation extraction with selective attention, \
                        a generator that synthesises instance embeddings from (head, relation, tail) triplets, \
                        a discriminator trained against it, and a rank loss that pushes generated instances \
                        into the top-k of each bag. Implemented on [numpy] with its own reverse-mode tape, \
                        configured with [pydantic] models.\
                        ",
    license = "Apache License 2.0",

    packages = find_packages(exclude=("test", "test.*")),
    include_package_data = True,
    platforms = "any",
    install_requires = ["pydantic>=2,<3", "numpy>=1.22"],
    extras_require = {"test": ["pytest", "pytest-cov"]},
    entry_points = {"console_scripts": ["rdsgan = omi_rdsgan.cli:main"]},
)
