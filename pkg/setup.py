from setuptools import setup
from pathlib import Path

current_dir = Path(__file__).parent
long_description = (current_dir / "README.md").read_text(encoding="utf-8")

version = "1.0.0"

setup(
    name="rover-teacher-student",
    version=version,
    description="Teacher-student reinforcement learning for mapless rover navigation on rough terrain "
                "(terrain simulation, PPO teacher, student distillation, evaluation)",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="RoverNav Developers",
    url="https://github.com/rovernav/rovernav",
    download_url=f"https://github.com/rovernav/rovernav/tarball/{version}",
    license="CC BY-NC-SA 4.0",
    packages=["rovernav"],
    include_package_data=True,
    install_requires=[
        "h5py",
        "numpy",
        "scipy",
        "pandas",
        "scikit-learn",
        "matplotlib"
    ],
    python_requires=">=3.10",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: Other/Proprietary License",
        "Operating System :: OS Independent",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Visualization",
    ],
    keywords="reinforcement-learning ppo distillation rover navigation heightmap teacher-student",
    entry_points={
        "console_scripts": [
            "rovernav = rovernav.core:main"
        ],
    },
    project_urls={
        "Source": "https://github.com/rovernav/rovernav",
        "Bug Tracker": "https://github.com/rovernav/rovernav/issues",
        "License": "https://creativecommons.org/licenses/by-nc-sa/4.0/",
    },
)
