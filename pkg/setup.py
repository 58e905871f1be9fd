from setuptools import setup, find_packages

setup(
    name="map_delta",
    version="0.1.0",
    packages=find_packages("src"),
    package_dir={"": "src"},
    py_modules=["tweak_map"],
    python_requires=">=3.9",
    install_requires=["click", "matplotlib", "numpy", "networkx", "scipy", "shapely>=2.0"],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["tweak_map = tweak_map:cli"]},
)
