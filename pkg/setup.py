from setuptools import setup, find_packages


setup(
    name="mainbreak",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "isodate>=0.6.0",
        "jsonschema>=3.0.1",
        "mdf-toolbox>=0.4.10",
        "numpy>=1.20",
        "pandas>=1.5",
        "python-dateutil>=2.8",
        "PyYAML>=5.1",
        "scipy>=1.6"
    ],
    entry_points={
        "console_scripts": [
            "mainbreak=mainbreak.cli:main"
        ]
    }
)
