# SPDX-License-Identifier: Apache-2.0
"""Smoke test for the Python bindings.

Build with `cargo build --release -p macroforge-py --features extension-module`,
copy `target/release/libmacroforge_py.so` to `macroforge.so` on PYTHONPATH, then
run this script.
"""

import json
import xml.etree.ElementTree as ET

import macroforge


def main():
    design = macroforge.Design.synthetic(7, 10)
    assert design.macro_count == 10
    width, height = design.outline
    assert width > 0 and height > 0
    again = macroforge.Design.from_json(design.to_json())
    assert again.to_json() == design.to_json()

    config = macroforge.Config(seed=7)
    assert len(config.weights) == 7
    config = macroforge.Config.from_json(config.to_json())

    placement = macroforge.place(design, config)
    rects = placement.macros()
    assert len(rects) == 10
    for _, x, y, w, h in rects:
        assert -1e-6 <= x and x + w <= width + 1e-6
        assert -1e-6 <= y and y + h <= height + 1e-6
    assert placement.total_overlap == 0.0
    metrics = json.loads(placement.metrics_json())
    assert abs(metrics["hpwl"] - placement.hpwl) <= 1e-9 * placement.hpwl
    svg = ET.fromstring(placement.render_svg())
    assert svg.tag.endswith("svg")

    result = json.loads(macroforge.tune(design, budget=2, seed=7))
    assert len(result["history"]) == 2

    try:
        macroforge.Design.from_json("{}")
    except macroforge.MacroforgeError:
        pass
    else:
        raise AssertionError("malformed design was accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
