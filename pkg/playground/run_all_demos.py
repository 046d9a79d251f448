#!/usr/bin/env python3
"""
Demo Runner Script
Executes the simulator demos individually or all together
"""

import sys
import subprocess
import argparse
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

DEMOS = {
    "eigen": ("eigen_curve_demo.py", "Principal Eigenvalue Demo"),
    "framework": ("framework_demo.py", "Numerical Framework Demo"),
    "frequency": ("frequency_sweep_demo.py", "Refuge Frequency Demo"),
    "quantity": ("quantity_sweep_demo.py", "Refuge Quantity Demo"),
}


def run_demo(script_name, description, extra_args=()):
    """Run a demo script and handle errors"""
    print(f"\n{'='*60}")
    print(f"🚀 Running {description}")
    print(f"{'='*60}")

    script_path = Path(__file__).parent / script_name

    if not script_path.exists():
        print(f"❌ Script not found: {script_path}")
        return False

    try:
        result = subprocess.run([sys.executable, str(script_path), *extra_args],
                                capture_output=False,
                                text=True)
        if result.returncode == 0:
            print(f"✅ {description} completed successfully!")
            return True
        print(f"❌ {description} failed with return code: {result.returncode}")
        return False
    except OSError as e:
        print(f"❌ Error running {description}: {e}")
        return False


def main():
    parser = argparse.ArgumentParser(description="Run refuge simulator demo scripts")
    for key, (_, description) in DEMOS.items():
        parser.add_argument(f"--{key}", action="store_true", help=f"Run the {description}")
    parser.add_argument("--all", action="store_true", help="Run every demo")
    parser.add_argument("--quick", action="store_true",
                        help="Run the framework demo on a 40x40 grid")

    args = parser.parse_args()

    selected = [key for key in DEMOS if args.all or getattr(args, key)]
    if not selected:
        parser.print_help()
        print("\n💡 Examples:")
        print("  python run_all_demos.py --eigen")
        print("  python run_all_demos.py --framework --quick")
        print("  python run_all_demos.py --all")
        return 0

    print("🎯 Refuge Simulator Demo Runner")
    print("=" * 60)

    output_dir = Path(__file__).resolve().parent.parent / "test-data"
    output_dir.mkdir(exist_ok=True)
    print(f"📁 Demo output will be saved to: {output_dir}")

    success_count = 0
    for key in selected:
        script, description = DEMOS[key]
        extra = ["--quick"] if key == "framework" and args.quick else []
        if run_demo(script, description, extra):
            success_count += 1

    total_count = len(selected)
    print(f"\n{'='*60}")
    print("📊 Demo Execution Summary")
    print(f"{'='*60}")
    print(f"✅ Successful: {success_count}")
    print(f"❌ Failed: {total_count - success_count}")
    print(f"📈 Success Rate: {(success_count/total_count)*100:.1f}%")

    print("\n🎉 Demo runner completed!")
    return 0 if success_count == total_count else 1


if __name__ == "__main__":
    sys.exit(main())
