"""End-to-end checks of the lions-kit executable.

Usage: cli_test.py <lions-kit> <share dir> [unittest args...]
"""

import csv
import json
import math
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema

KIT = ""
SHARE = Path()


def run(*args, cwd=None):
    return subprocess.run([KIT, *args], capture_output=True, text=True, cwd=cwd, timeout=300)


def config(name):
    return str(SHARE / "configs" / f"{name}.json")


class CliTest(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.schema = json.loads((SHARE / "diagnostics.schema.json").read_text())

    def tearDown(self):
        self.tmp.cleanup()

    def solve(self, name, *extra):
        out = self.dir / name
        res = run("solve", "--config", config(name), "--out", str(out), *extra)
        self.assertEqual(res.returncode, 0, res.stderr)
        diag = json.loads((out / "diagnostics.json").read_text())
        jsonschema.validate(diag, self.schema)
        return out, diag

    def test_decay_final_value(self):
        out, diag = self.solve("decay")
        with open(out / "trajectory.csv") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["t", "u_1"])
        t_end, u_end = map(float, rows[-1])
        self.assertEqual(t_end, 1.0)
        # Implicit Euler with N = 128 steps: (1 + 1/N)^{-N}, within O(1/N) of e^{-1}.
        self.assertAlmostEqual(u_end, (1 + 1 / 128) ** -128, delta=1e-14)
        self.assertLess(abs(u_end - math.exp(-1)), 2e-3)
        self.assertAlmostEqual(diag["propagator_norm"], (1 + 1 / 128) ** -128, delta=1e-12)

    def test_periodic_boundary_residual(self):
        _, diag = self.solve("periodic_cosine")
        self.assertLess(diag["boundary_residual"], 1e-10)
        self.assertIsNotNone(diag["stability_constant"])
        self.assertGreater(diag["stability_constant"], 0)
        self.assertAlmostEqual(diag["final_state"][0], 1 / (1 + 4 * math.pi**2), delta=1e-4)

    def test_all_samples_validate(self):
        for name in ["decay", "periodic_forced", "periodic_cosine", "constant_manufactured",
                     "rotating_heat", "complex_oscillator"]:
            with self.subTest(name=name):
                _, diag = self.solve(name)
                self.assertLess(diag["cross_solver_gap"], 1e-8)
        _, timed = self.solve("decay", "--timing")
        self.assertIn("wall_time_seconds", timed)

    def test_complex_trajectory_cells(self):
        out, diag = self.solve("complex_oscillator")
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        self.assertEqual(header, "t,u_1,u_2")
        cell = (out / "trajectory.csv").read_text().splitlines()[1].split(",")[1]
        self.assertTrue(cell.endswith("i"))
        self.assertEqual(len(diag["final_state"][0]), 2)

    def test_determinism(self):
        a = self.dir / "a"
        b = self.dir / "b"
        for d in (a, b):
            self.assertEqual(run("solve", "--config", config("rotating_heat"), "--out", str(d)).returncode, 0)
        for name in ("trajectory.csv", "diagnostics.json"):
            self.assertEqual((a / name).read_bytes(), (b / name).read_bytes())
        ca = run("converge", "--config", config("decay"), "--out", str(a))
        cb = run("converge", "--config", config("decay"), "--out", str(b))
        self.assertEqual(ca.returncode, 0)
        self.assertEqual((a / "convergence.csv").read_bytes(), (b / "convergence.csv").read_bytes())
        self.assertEqual(ca.stdout, cb.stdout)

    def test_expansive_phi_rejected(self):
        res = run("solve", "--config", config("expansive_phi"), "--out", str(self.dir / "x"))
        self.assertEqual(res.returncode, 3)
        err = json.loads(res.stderr.strip().splitlines()[-1])["error"]
        self.assertIn("contraction", err["message"])

    def test_config_errors(self):
        bad = self.dir / "bad.json"
        bad.write_text('{"problem": {"dimension": 2, "form": {"preset": "constant", "matrix": [[1, 0]]}}}')
        res = run("solve", "--config", str(bad))
        self.assertEqual(res.returncode, 2)
        err = json.loads(res.stderr.strip().splitlines()[-1])["error"]
        self.assertEqual(err["type"], "config")
        self.assertEqual(err["path"], "problem.form.matrix")
        bad.write_text('{\n  "problem": {\n    "dimension": 1,\n  }\n}\n')
        res = run("solve", "--config", str(bad))
        self.assertEqual(res.returncode, 2)
        self.assertEqual(json.loads(res.stderr.strip().splitlines()[-1])["error"]["line"], 4)
        res = run("solve", "--config", str(self.dir / "missing.json"))
        self.assertEqual(res.returncode, 2)
        self.assertEqual(run("solve").returncode, 2)

    def test_converge_orders(self):
        res = run("converge", "--config", config("decay"), "--out", str(self.dir))
        self.assertEqual(res.returncode, 0, res.stderr)
        with open(self.dir / "convergence.csv") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(list(rows[0].keys()), ["N", "theta", "error", "order"])
        for r in rows:
            if r["order"] == "NA":
                continue
            expected = 1.0 if float(r["theta"]) == 1.0 else 2.0
            self.assertLess(abs(float(r["order"]) - expected), 0.15 if expected == 1.0 else 0.2)

    def test_converge_constant_is_exact(self):
        res = run("converge", "--config", config("constant_manufactured"), "--out", str(self.dir))
        self.assertEqual(res.returncode, 0, res.stderr)
        with open(self.dir / "convergence.csv") as f:
            rows = list(csv.DictReader(f))
        for r in rows:
            self.assertLess(float(r["error"]), 1e-13)
            self.assertEqual(r["order"], "NA")

    def test_converge_requires_manufactured(self):
        res = run("converge", "--config", config("periodic_cosine"), "--out", str(self.dir))
        self.assertEqual(res.returncode, 2)

    def test_verify_suites(self):
        for suite in ("rtl", "derivation"):
            with self.subTest(suite=suite):
                res = run("verify", "--suite", suite, "--seed", "7")
                self.assertEqual(res.returncode, 0, res.stdout)
                lines = [l for l in res.stdout.splitlines() if l.startswith(("PASS", "FAIL"))]
                self.assertTrue(lines)
                self.assertTrue(all(l.startswith("PASS") for l in lines))
                self.assertRegex(res.stdout, r"checks passed .* in [0-9.]+ s")

    def test_verify_zero_tolerance_fails(self):
        res = run("verify", "--suite", "all", "--seed", "7", "--tol", "0", "--out", str(self.dir))
        self.assertNotEqual(res.returncode, 0)
        self.assertIn("FAIL", res.stdout)
        self.assertIn("witness:", res.stdout)
        report = json.loads((self.dir / "verify.json").read_text())
        self.assertTrue(any(not c["passed"] and c["witness"] for c in report["checks"]))


if __name__ == "__main__":
    KIT = sys.argv[1]
    SHARE = Path(sys.argv[2])
    unittest.main(argv=[sys.argv[0], *sys.argv[3:]])
