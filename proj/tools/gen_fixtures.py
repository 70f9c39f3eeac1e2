#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the FCIDUMP / occupancy fixtures under tests/data with PySCF.

Usage: python3 tools/gen_fixtures.py tests/data
"""
import json
import sys
from pathlib import Path

import numpy as np
from pyscf import fci, gto, mp, scf, tools


def chain(n, r):
    return [("H", (0.0, 0.0, i * r)) for i in range(n)]


SYSTEMS = {
    "h2_sto3g": dict(atom=chain(2, 0.74)),
    "h4_chain": dict(atom=chain(4, 1.0)),
    "lih_sto3g": dict(atom=[("Li", (0, 0, 0)), ("H", (0, 0, 1.6))]),
    "h6_chain": dict(atom=chain(6, 1.2)),
    "h8_chain": dict(atom=chain(8, 1.0)),
}


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    refs = {}
    for name, kw in SYSTEMS.items():
        mol = gto.M(basis="sto-3g", unit="angstrom", verbose=0, **kw)
        mf = scf.RHF(mol).run()
        tools.fcidump.from_scf(mf, str(out / f"{name}.fcidump"), tol=1e-14)
        norb = mf.mo_coeff.shape[1]
        e_fci = fci.FCI(mf).kernel()[0]
        refs[name] = {"norb": int(norb), "nelec": int(mol.nelectron),
                      "e_hf": float(mf.e_tot), "e_fci": float(e_fci)}
        pt = mp.MP2(mf).run()
        occ = np.diag(pt.make_rdm1()) / 2.0
        with open(out / f"{name}.occ", "w") as f:
            for v in occ:
                f.write(f"{v:.12f} {v:.12f}\n")
    with open(out / "references.json", "w") as f:
        json.dump(refs, f, indent=2)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
