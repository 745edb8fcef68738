"""
Setup script for maniploc: forgery detection and localization with
progressive spatio-channel correlation, plus the synthetic training corpus.
"""

from setuptools import setup, find_packages
from pathlib import Path

# Read the README file
readme_file = Path(__file__).parent / "README.md"
long_description = readme_file.read_text(encoding="utf-8") if readme_file.exists() else ""

# Read requirements
requirements_file = Path(__file__).parent / "requirements.txt"
requirements = []
if requirements_file.exists():
    requirements = [
        line.strip()
        for line in requirements_file.read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]

setup(
    name="maniploc",
    version="1.0.0",
    description=(
        "Image manipulation detection and localization with a progressive "
        "spatio-channel correlation network, synthetic forgery corpus and robustness benchmarks"
    ),
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="maniploc developers",
    author_email="",
    packages=find_packages(exclude=["examples", "examples.*"]),
    include_package_data=True,
    install_requires=requirements,
    extras_require={"dev": ["pytest>=7.0.0", "pytest-cov>=4.0.0"]},
    python_requires=">=3.9",
    entry_points={
        "console_scripts": [
            "maniploc=maniploc.main:main",
        ],
    },
    keywords=["image forensics", "manipulation localization", "splicing", "copy-move", "inpainting", "pytorch"],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
        "Environment :: GPU :: NVIDIA CUDA",
        "Topic :: Scientific/Engineering :: Image Recognition",
        "Topic :: Scientific/Engineering :: Image Processing",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Security",
    ],
)
