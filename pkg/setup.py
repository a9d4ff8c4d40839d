import setuptools

setuptools.setup(
    name="aloha-connectivity",
    version="0.1.0",
    description="Connectivity and delay simulator for slotted ALOHA Poisson ad hoc networks",
    packages=setuptools.find_packages(include=["aloha_connectivity", "aloha_connectivity.*"]),
    python_requires=">=3.9",
    keywords=["ALOHA", "Poisson point process", "percolation"],
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.9",
        "pandas>=1.4",
        "tabulate",
    ],
    entry_points={
        "console_scripts": [
            "aloha-connectivity = aloha_connectivity.cli:main"
        ]
    },
)
