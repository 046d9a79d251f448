#!/usr/bin/env python3
"""
Refuge Quantity Demo
Harvest against a uniform refuge density for a light and a heavy infestation
"""

import sys
import os
from pathlib import Path
from dataclasses import replace
from dotenv import load_dotenv

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

load_dotenv()

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from utils.config import DATA_DIR, RunConfig, setup_logging
from utils.control import sweep_quantity, write_sweep_outputs

# infected aphids at t = 0, as a fraction of the field carrying capacity
INFESTATIONS = {"light": 0.01, "heavy": 2.0}


def main():
    setup_logging()
    print("📏 Refuge Quantity Demo")
    print("=" * 50)

    output_dir = Path(__file__).resolve().parent.parent / "test-data" / "quantity"
    base = RunConfig.from_file(DATA_DIR / "configs" / "desk_quantity.cfg")

    fig, ax = plt.subplots(figsize=(7, 4))
    for label, vi0_factor in INFESTATIONS.items():
        print(f"\n🐛 {label} infestation (V_i0 = {vi0_factor} x carrying capacity)")
        config = replace(base, vi0_factor=vi0_factor)
        result = sweep_quantity(config.build_sweep_spec("quantity"))
        print(result.table.to_string(index=False))
        print(f"✅ Best refuge density: r = {result.argmax}")
        write_sweep_outputs(result, output_dir, f"sweep_quantity_{label}", config.to_dict())
        ok = result.table[result.table["status"] == "ok"]
        ax.plot(ok["axis_value"], ok["healthy_fraction"], marker="o", label=label)

    ax.set_xlabel("refuge density r")
    ax.set_ylabel("healthy fraction")
    ax.legend()
    plt.tight_layout()
    plt.savefig(output_dir / "quantity_sweeps.png", dpi=150)
    plt.close(fig)
    print(f"\n📁 Results saved to: {output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
