from setuptools import setup

setup(name='robgc',
      version='0.1',
      description='Robust graph condensation: condensed-graph guided structure denoising',
      license='MIT',
      packages=['robgc',
                'robgc.datasource'],
      install_requires=[
          'click',
          'numpy',
          'PyYAML',
          'scipy',
          # Dev requirements - listed in main requirements to make the
          # environment self-contained for testing.
          'flake8',
          'pytest',
          'pytest-cov',
      ],
      entry_points={
          'console_scripts': [
              'robgc=robgc.cli:cli',
          ],
      })
