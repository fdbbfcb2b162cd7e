import setuptools


with open("README.md") as fp:
    long_description = fp.read()


setuptools.setup(
    name="vml_lab",
    version="0.1.0",
    description="Rarefaction-wave hydrodynamic limit lab for the Vlasov-Maxwell-Landau system",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="author",
    packages=setuptools.find_packages(exclude=["examples", "examples.*"]),
    py_modules=["app"],
    install_requires=[
        "numpy==1.23.5",
        "pandas==1.5.2",
        "scikit-learn==1.2.0",
        "scipy==1.9.3",
        "numba==0.56.4",
        "matplotlib==3.6.2",
    ],
    extras_require={"dev": ["pytest==7.2.0", "black==22.12.0"]},
    entry_points={"console_scripts": ["vml-lab=app:cli"]},
    python_requires=">=3.9",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: Apache Software License",
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: 3.9",
        "Topic :: Scientific/Engineering :: Physics",
        "Typing :: Typed",
    ],
)
