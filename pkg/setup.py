#!/usr/bin/env python3
"""
Setup script for the viewbias toolkit
Installs dependencies, prepares working directories and runs the test suites
"""

import os
import subprocess
import sys

TEST_SUITES = (
    "test_skeleton.py",
    "test_body_frame.py",
    "test_view_cluster.py",
    "test_heads_losses.py",
    "test_metrics.py",
    "test_synth.py",
    "test_toy_net.py",
    "test_analysis.py",
    "test_system.py",
)


def check_python_version():
    """Check if Python version is compatible"""
    if sys.version_info < (3, 8):
        print("❌ Python 3.8 or higher is required")
        return False
    print(f"✅ Python {sys.version_info.major}.{sys.version_info.minor} detected")
    return True


def install_python_dependencies():
    """Install Python dependencies"""
    print("📦 Installing Python dependencies...")
    try:
        subprocess.check_call([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"])
        print("✅ Python dependencies installed")
        return True
    except subprocess.CalledProcessError:
        print("❌ Failed to install Python dependencies")
        return False


def check_env_file():
    """Report VIEWBIAS_* overrides picked up from .env or the environment"""
    from dotenv import load_dotenv
    load_dotenv()

    overrides = sorted(k for k in os.environ if k.startswith("VIEWBIAS_"))
    if overrides:
        print(f"✅ Configuration overrides: {', '.join(overrides)}")
    else:
        print("✅ No VIEWBIAS_* overrides; using defaults from config.py")
    if not os.path.exists(".env") and os.path.exists(".env.example"):
        print("   Copy .env.example to .env to change defaults")


def create_directories():
    """Create necessary directories"""
    for directory in ("./data", "./runs", "./logs"):
        if not os.path.exists(directory):
            os.makedirs(directory)
            print(f"📁 Created directory: {directory}")
        else:
            print(f"✅ Directory exists: {directory}")


def run_tests():
    """Run every test suite"""
    print("🧪 Running test suites...")
    failed = []
    for suite in TEST_SUITES:
        result = subprocess.run([sys.executable, suite], capture_output=True, text=True)
        if result.returncode == 0:
            print(f"✅ {suite}")
        else:
            print(f"❌ {suite}")
            print(result.stdout)
            print(result.stderr)
            failed.append(suite)
    return not failed


def main():
    """Main setup function"""
    print("🚀 viewbias - Setup")
    print("=" * 50)

    if not check_python_version():
        return False

    if not install_python_dependencies():
        return False

    check_env_file()
    create_directories()

    print("\n" + "=" * 50)
    tests_ok = run_tests()
    print("🎯 Setup Summary:")
    print("✅ Python Dependencies: Installed")
    print("✅ Directories: Created")
    print("✅ Tests: Passing" if tests_ok else "❌ Tests: Failing (see output above)")

    print("\n📋 Next Steps:")
    print("1. Generate data: python viewbias.py synth --profile h36m-like --count 20000 --out data/h36m.jsonl")
    print("2. Inspect it:    python viewbias.py analyze data/*.jsonl --out-dir runs/report --probe")
    print("3. See README.md for training, evaluation and ablations")

    return tests_ok


PY_MODULES = [
    "analysis", "body_frame", "config", "errors", "heads_losses", "metrics",
    "skeleton", "synth", "toy_net", "view_cluster", "viewbias",
]


def package_setup():
    """Packaging metadata, used when pip/setuptools invokes this file with build commands"""
    from setuptools import setup

    here = os.path.dirname(os.path.abspath(__file__))
    with open(os.path.join(here, "requirements.txt")) as fh:
        requirements = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    setup(
        name="viewbias",
        version="0.1.0",
        py_modules=PY_MODULES,
        install_requires=requirements,
        python_requires=">=3.8",
        entry_points={"console_scripts": ["viewbias=viewbias:main"]},
    )


if __name__ == "__main__" and len(sys.argv) > 1:
    package_setup()
elif __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
