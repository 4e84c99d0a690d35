#!/usr/bin/env python3
"""Smoke test for the predicator_py extension module.

Build the extension first, then run this script:

    cargo build -p predicator-py --release
    python3 python/smoke_test.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def import_extension():
    candidates = [
        ROOT / "target" / "release" / "libpredicator_py.so",
        ROOT / "target" / "debug" / "libpredicator_py.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p predicator-py --release")
    stage = Path(tempfile.mkdtemp(prefix="predicator_py_"))
    shutil.copy(built, stage / "predicator_py.so")
    sys.path.insert(0, str(stage))
    import predicator_py

    return predicator_py


def main():
    pp = import_extension()
    print(f"predicator_py {pp.__version__}")

    abs_ir = (ROOT / "crates/predicator/kernels/abs.ir").read_text()
    abs_in = (ROOT / "crates/predicator/kernels/abs.in").read_text()

    # Validation and canonical printing.
    assert pp.check(abs_ir) == [], "abs kernel should be clean"
    assert pp.check("func @f(%x) {\nentry:\n  ret %y\n}") != []
    assert "func @abs" in pp.reprint(abs_ir)

    # Candidate discovery + features.
    program = pp.Program(abs_ir)
    assert program.candidate_count() == 1
    cand = program.candidates()[0]
    assert cand["shape"] == "triangle-true"
    assert cand["head"] == "entry"
    feats = program.features()
    assert len(feats) == 1 and abs(feats[0]["unexploited_ilp"] - 1.5) < 1e-9
    assert program.features_csv().startswith("bb_size,")

    # Conversion: all-zeros is the identity, all-ones lowers to a select.
    unchanged, report = program.convert("0")
    assert unchanged == pp.reprint(abs_ir)
    assert report[0]["outcome"] == "skipped-bit-0"
    converted, report = program.convert("1")
    assert "select" in converted and report[0]["outcome"] == "converted"

    # Simulation, with and without conversion.
    plain = program.simulate(abs_in)
    masked = program.simulate(abs_in, bitmask="1")
    assert plain["cycles"] > 0 and plain["branch_count"] == 1
    assert masked["branch_count"] == 0

    # Exhaustive oracle and a small tune run agree on the best mask.
    oracle = program.exhaustive([abs_in])
    assert len(oracle["table"]) == 2
    tuned = program.tune(
        [abs_in],
        seed=7,
        neat="population = 10\ngenerations = 5\n",
    )
    assert tuned["best_bitmask"] == oracle["optimal_bitmask"]
    assert abs(tuned["best_speedup"] - oracle["optimal_speedup"]) < 1e-9
    assert len(tuned["history"]) == 5

    # Determinism across calls.
    again = program.tune([abs_in], seed=7, neat="population = 10\ngenerations = 5\n")
    assert again == tuned

    # Genome text re-activates through the helper.
    bits = pp.genome_bits(tuned["genome"], [[0.0] * 11])
    assert bits in ("0", "1")

    print("smoke test: OK")


if __name__ == "__main__":
    main()
