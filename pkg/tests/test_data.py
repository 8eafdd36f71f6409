import numpy as np
import pytest

from dualcal.data import (DualFrameSample, FrameMeta, SampleValidationError, UnitRecord,
                          format_meta, load_meta, load_sample, parse_meta, require_valid,
                          save_sample, validate_for_approach)

from conftest import four_row_sample

CSV = """id,domain,d_A,d_B,stratum_A,stratum_B,y,x
u1,a,2.0,,,,1.0,5
u2,ab,2.0,,,,2.0,6
u3,ba,,2.0,,,3.0,7
u4,b,,2.0,,,4.0,8
"""


def write(tmp_path, text, name="s.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_four_row_file(tmp_path):
    s = load_sample(write(tmp_path, CSV), {"aux": ["x"]})
    assert s.n_A == 2 and s.n_B == 2
    assert s.counts == {"a": 1, "ab": 1, "ba": 1, "b": 1}
    assert list(s.y) == ["y"] and list(s.aux) == ["x"]
    np.testing.assert_array_equal(s.variable("x"), [5, 6, 7, 8])


def test_overlap_without_d_B_depends_on_approach(tmp_path):
    path = write(tmp_path, CSV)
    load_sample(path, approach="dual")
    with pytest.raises(SampleValidationError, match="u2"):
        load_sample(path, approach="single")


def test_negative_weight_rejected(tmp_path):
    bad = CSV.replace("u1,a,2.0", "u1,a,-1")
    with pytest.raises(SampleValidationError, match="non-positive weight"):
        load_sample(write(tmp_path, bad))


@pytest.mark.parametrize("edit, message", [
    (lambda t: t.replace("u2,ab", "u1,ab"), "duplicate id"),
    (lambda t: t.replace("u4,b,", "u4,c,"), "unknown domain"),
    (lambda t: t.replace("id,", "unit,"), "missing column"),
])
def test_malformed_files(tmp_path, edit, message):
    with pytest.raises(SampleValidationError, match=message):
        load_sample(write(tmp_path, edit(CSV)))


def test_schema_renames_id(tmp_path):
    s = load_sample(write(tmp_path, CSV.replace("id,", "unit,")), {"id": "unit"})
    assert list(s.ids) == ["u1", "u2", "u3", "u4"]


def test_round_trip(tmp_path, draw):
    sample, _ = draw
    path = tmp_path / "rt.csv"
    schema = save_sample(sample, path)
    back = load_sample(path, schema, "single", sample.meta)
    np.testing.assert_array_equal(back.domain, sample.domain)
    np.testing.assert_array_equal(back.d_A, sample.d_A)
    np.testing.assert_array_equal(back.d_B, sample.d_B)
    for name in ("y", "x_A", "x_B", "z"):
        np.testing.assert_array_equal(back.variable(name), sample.variable(name))
    assert list(back.stratum_A[back.in_sample_A]) == list(sample.stratum_A[sample.in_sample_A])


def test_validation_reports():
    tiny = four_row_sample()
    assert validate_for_approach(tiny, "dual") == []
    problems = validate_for_approach(tiny, "single")
    assert any("u2" in p for p in problems) and any("u3" in p for p in problems)
    no_b = tiny.take(np.array([True, True, True, False]))
    assert "domain b unsampled" in validate_for_approach(no_b, "dual")
    require_valid(no_b, "dual")
    with pytest.raises(SampleValidationError, match="domain b unsampled"):
        require_valid(no_b, "dual", domains="b")


def test_records_round_trip():
    tiny = four_row_sample()
    again = DualFrameSample.from_records(tiny.records(), tiny.meta)
    np.testing.assert_array_equal(again.variable("y"), tiny.variable("y"))
    assert isinstance(tiny.records()[0], UnitRecord)


def test_frame_membership():
    tiny = four_row_sample()
    np.testing.assert_array_equal(tiny.in_frame_A, [True, True, True, False])
    np.testing.assert_array_equal(tiny.in_frame_B, [False, True, True, True])


def test_meta_sizes_and_round_trip(tmp_path):
    meta = FrameMeta(150, 120, 50, numeric_totals={("x", "A"): 10.5})
    assert (meta.N_a, meta.N_b, meta.N) == (100, 70, 220)
    path = tmp_path / "meta.txt"
    path.write_text(format_meta(meta) + "design.A = srswor\n")
    back = load_meta(path)
    assert (back.N_A, back.N_B, back.N_ab) == (150, 120, 50)
    assert back.numeric_total("x", "A") == 10.5
    assert parse_meta({"N_A": "10", "N_B": "8"}).N_ab is None


def test_meta_rejects_inconsistent_sizes():
    with pytest.raises(SampleValidationError):
        FrameMeta(10, 8, 11)
