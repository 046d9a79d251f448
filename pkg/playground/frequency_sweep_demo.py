#!/usr/bin/env python3
"""
Refuge Frequency Demo
Harvest against refuge frequency for the three initial infestations on the
40x40 desk grid
"""

import sys
import os
import time
from pathlib import Path
from dataclasses import replace
from dotenv import load_dotenv

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

load_dotenv()

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from utils.config import DATA_DIR, RunConfig, setup_logging
from utils.control import sweep_frequency, write_sweep_outputs

INITIAL_CONDITIONS = {
    "random_patches": "Three random patches",
    "centered_patch": "One centered patch",
    "uniform": "Uniform infestation",
}


def main():
    setup_logging()
    print("🔁 Refuge Frequency Demo")
    print("=" * 50)

    output_dir = Path(__file__).resolve().parent.parent / "test-data" / "frequency"
    base = RunConfig.from_file(DATA_DIR / "configs" / "desk_frequency.cfg")

    fig, axes = plt.subplots(1, len(INITIAL_CONDITIONS), figsize=(15, 4))
    for ax, (ic, title) in zip(axes, INITIAL_CONDITIONS.items()):
        print(f"\n🌾 {title}")
        config = replace(base, ic=ic)
        start = time.time()
        result = sweep_frequency(config.build_sweep_spec("frequency"))
        print(result.table.to_string(index=False))
        print(f"✅ Best frequency: n = {result.argmax} ({time.time() - start:.1f}s)")
        write_sweep_outputs(result, output_dir, f"sweep_frequency_{ic}", config.to_dict())

        ok = result.table[result.table["status"] == "ok"].sort_values("axis_value")
        ax.plot(ok["axis_value"], ok["healthy_fraction"], marker="o")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("refuge frequency n")
        ax.set_ylabel("healthy fraction")
        ax.set_title(title)

    plt.tight_layout()
    plt.savefig(output_dir / "frequency_sweeps.png", dpi=150)
    plt.close(fig)
    print(f"\n📁 Results saved to: {output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
