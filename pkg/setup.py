import os
from setuptools import setup

DEPENDENCIES = [
    "numpy>=1.20",
    "scipy>=1.6",
]

TEST_DEPENDENCIES = [
    "black==20.8b1",
    "flake8==3.9.0",
    "pytest==6.2.3",
    "pytest-cov==2.11.1",
]

with open(os.path.join(os.path.abspath(os.path.dirname(__file__)), "README.md"), encoding="utf-8") as f:
    LONG_DESCRIPTION = f.read()

setup(
    name="smmcts",
    description="Monte Carlo tree search with regret-minimizing selection for simultaneous-move zero-sum games",
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    version="1.0.0",
    packages=["smmcts"],
    python_requires=">=3.8",
    install_requires=DEPENDENCIES,
    classifiers=[
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    entry_points={"console_scripts": ["smmcts = smmcts.cli:main"]},
    tests_require=TEST_DEPENDENCIES,
    extras_require={"test": TEST_DEPENDENCIES},
)
