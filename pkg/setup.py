from setuptools import setup, find_packages

setup(
    name="polarphase",
    version="0.1.0",
    description="Phase retrieval from polarized intensity measurements on graph-structured frames",
    author="Your Name",
    packages=find_packages(exclude=["examples", "examples.*"]),
    py_modules=["polarphase_cli", "logging_config"],
    data_files=[("config", ["config/settings.json"])],
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "networkx>=3.1",
        "click==8.1.7",
        "python-dotenv==1.0.0",
        "logtail-python",
    ],
    extras_require={
        "test": [
            "pytest>=7.4",
            "hypothesis>=6.88",
        ],
    },
    entry_points={
        "console_scripts": [
            "polarphase=polarphase_cli:main",
        ],
    },
    python_requires=">=3.9",
)
