from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="piper-desk",
    version="0.3.0",
    author="PIPER contributors",
    description="Physics-informed policy optimization for planar robot arms",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
        "python-json-logger>=2.0.4",
        "retry>=0.9.2",
    ],
    entry_points={
        "console_scripts": [
            "piper=piper.cli:main",
        ],
    },
)
