from setuptools import setup

setup(
    name='tfqkd_sim',
    version='0.1.0',
    description='Twin-field QKD simulator and key-rate analysis toolkit',
    packages=['tfqkd_sim'],
    package_dir={'': 'src'},
    package_data={'tfqkd_sim': ['data/*.csv']},
    scripts=['scripts/tfqkd'],
    python_requires='>=3.7',
    install_requires=[
        'numpy',
        'scipy',
        'PyYAML',
    ],
    extras_require={'test': ['pytest']},
)
