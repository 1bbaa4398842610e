from setuptools import find_packages, setup

setup(
    name="posi-bounds",
    version="1.0.0",
    packages=find_packages(include=["posi_bounds", "posi_bounds.*"]),
    install_requires=[
        "numpy>=1.26",
        "pydantic>=2.6",
        "scipy>=1.11",
    ],
    extras_require={
        "dev": [
            "pre-commit==4.0.1",
            "isort==5.13.2",
            "black==24.10.0",
            "pytest>=8.0",
        ],
    },
    entry_points={"console_scripts": ["posi-bounds=posi_bounds.cli:main"]},
)
