from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import toy_case
from v2gsiting.formulation import ModelConfig, build_extensive_form
from v2gsiting.solver.lp import LPProblem
from v2gsiting.solver.mps import (MPSFormatError, column_name, export_mps, format_number,
                                  names_table, read_mps, row_name)

DATA = Path(__file__).parent / "data"


class Plain:
    def __init__(self, lp, integrality, name):
        self.lp, self.integrality, self.name = lp, integrality, name


def min_x_at_least_3():
    lp = LPProblem(np.array([1.0]), sp.csr_matrix([[1.0]]), np.array(["G"]), np.array([3.0]),
                   np.zeros(1), np.full(1, np.inf))
    return Plain(lp, np.zeros(1, dtype=bool), "GOLDEN")


def test_golden_file_byte_for_byte():
    assert export_mps(min_x_at_least_3()) == (DATA / "golden_min_x.mps").read_text()


def test_sink_receives_text():
    import io
    buf = io.StringIO()
    text = export_mps(min_x_at_least_3(), buf)
    assert buf.getvalue() == text


def test_names_fit_fields():
    assert column_name(0) == "C0000000" and row_name(36) == "R0000010"
    assert len(column_name(36 ** 7 - 1)) == 8
    with pytest.raises(ValueError):
        column_name(36 ** 7)


def test_format_number():
    assert format_number(3.0) == "3"
    assert format_number(-0.25) == "-0.25"
    assert len(format_number(1 / 3)) <= 12
    assert float(format_number(1 / 3)) == pytest.approx(1 / 3, rel=1e-9)
    with pytest.raises(ValueError):
        format_number(float("inf"))


def test_binaries_between_markers():
    inst, ss = toy_case("triangle", n=2)
    model = build_extensive_form(inst, ss)
    lines = export_mps(model).splitlines()
    start = next(k for k, l in enumerate(lines) if "'INTORG'" in l)
    end = next(k for k, l in enumerate(lines) if "'INTEND'" in l)
    inside = {l.split()[0] for l in lines[start + 1:end]}
    xs = {column_name(j) for j in model.registry.block("x")}
    assert inside == xs
    assert all(f" BV BND       {c}" in lines for c in xs)


def test_fixed_columns():
    lines = export_mps(Plain(LPProblem(np.array([1.0, 2.0]), sp.csr_matrix([[1.0, 1.0]]),
                                       np.array(["L"]), np.array([4.0]),
                                       np.array([2.0, -np.inf]), np.array([2.0, 5.0])),
                             np.zeros(2, dtype=bool), "T")).splitlines()
    assert " FX BND       C0000000  2" in lines
    assert " MI BND       C0000001" in lines and " UP BND       C0000001  5" in lines


def test_card_columns():
    inst, ss = toy_case("mesh5", n=3)
    text = export_mps(build_extensive_form(inst, ss, ModelConfig(station_budget=2)))
    section = None
    for line in text.splitlines():
        if not line.startswith(" "):
            section = line.split()[0]
            continue
        assert len(line) <= 61
        if section == "COLUMNS" and "'MARKER'" not in line:
            assert line[4:12].strip() == line.split()[0]
            assert line[14] != " " and line[24] != " "


def test_round_trip_structurally_identical():
    inst, ss = toy_case("mesh5", n=3)
    model = build_extensive_form(inst, ss, ModelConfig(station_budget=2))
    parsed = read_mps(export_mps(model))
    lp, back = model.lp, parsed.lp
    assert parsed.name == "V2GSITE"
    assert back.A.shape == lp.A.shape
    assert np.array_equal(parsed.integrality, model.integrality)
    assert list(back.senses) == list(lp.senses)
    assert np.array_equal((back.A != 0).toarray(), (lp.A != 0).toarray())
    np.testing.assert_allclose(back.A.toarray(), lp.A.toarray(), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(back.c, lp.c, rtol=1e-9)
    np.testing.assert_allclose(back.rhs, lp.rhs, rtol=1e-9)
    np.testing.assert_array_equal(np.isinf(back.ub), np.isinf(lp.ub))
    np.testing.assert_allclose(back.lb, lp.lb, rtol=1e-9)
    fin = np.isfinite(lp.ub)
    np.testing.assert_allclose(back.ub[fin], lp.ub[fin], rtol=1e-9)


def test_names_table():
    inst, ss = toy_case("triangle", n=1)
    model = build_extensive_form(inst, ss)
    table = dict(line.split(" ", 1) for line in names_table(model).splitlines())
    assert table["C0000000"] == "x[0]"
    assert table[row_name(0)] == "stock_min[0]"
    assert len(table) == model.n_rows + model.n_columns


def test_reader_rejects_garbage():
    with pytest.raises(MPSFormatError):
        read_mps("NAME X\nWHAT\n")
    with pytest.raises(MPSFormatError):
        read_mps("NAME X\nROWS\n Q  R1\n")
