from setuptools import setup, find_packages
from dirveval import __version__
from os import path

here = path.abspath(path.dirname(__file__))

with open(path.join(here, 'requirements.txt')) as f:
    requirements = f.read().splitlines()

# Get the long description from the README file
long_description = ""
readme_path = path.join(here, 'README.md')
if path.isfile(readme_path):
    with open(readme_path, encoding='utf-8') as f:
        long_description = f.read()

setup(
    name='dirveval',
    version=__version__,
    description='Online comparison of rankings on post-click metrics with variance-minimizing interleaving',
    long_description=long_description,
    long_description_content_type="text/markdown",
    python_requires='>=3.7',
    packages=find_packages(exclude=['*.tests*']),
    install_requires=requirements,
    # Used for including non-Python files in package
    package_data={'dirveval': ['experiment_config_schema.yml']},
    entry_points={
        'console_scripts': [
            'dirveval=dirveval.dirveval:main',
        ],
    },
    classifiers=[
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: Apache Software License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3 :: Only',
        'Topic :: Scientific/Engineering :: Information Analysis',
    ],
)
