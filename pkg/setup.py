try:
    from setuptools import setup
except ImportError:
    from distutils.core import setup

with open("README.md", "r") as f:
    long_desc = f.read()

with open("fracshrink/_version.py", "r") as f:
    exec(f.read())

setup(
    name='fracshrink',
    version=__version__,
    description='Fractional mean curvature, shrinkers and flows of radial sets',
    long_description = long_desc,
    long_description_content_type='text/markdown',
    author='fracshrink contributors',
    classifiers = [
        'Development Status :: 3 - Alpha',
        'Programming Language :: Python :: 3',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
    python_requires='>=3.8',
    install_requires = ['numpy', 'scipy', 'tqdm'],
    extras_require = {'test': ['pytest']},
    packages=['fracshrink'],
    entry_points = {'console_scripts': ['fracshrink=fracshrink.cli:main']},
)
