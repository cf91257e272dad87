import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttma.config import DEFAULTS, Config, ConfigError
from ttma.core import UncertaintyRecord
from ttma.records import (
    COLUMNS,
    RecordFormatError,
    group_by_method,
    read_records_csv,
    single_pass_view,
    write_records_csv,
)

finite = st.floats(0, 10, allow_nan=False)


@st.composite
def records(draw):
    method = draw(st.sampled_from(["ttma_du", "ttma_cdu", "tta", "mcdo", "single"]))
    partner = draw(st.integers(0, 3)) if method == "ttma_cdu" else None
    return UncertaintyRecord.build(
        draw(st.integers(0, 10**6)), method, draw(st.integers(0, 3)), draw(st.integers(0, 3)),
        draw(st.floats(0, math.log(4))), 4, draw(st.floats(0, 1)), partner_class=partner,
        afd=draw(st.floats(0, 2)) if partner is not None else None,
        single_class=draw(st.integers(0, 3)), single_confidence=draw(st.floats(0, 1)),
    )


@given(st.lists(records(), max_size=20))
def test_records_round_trip_exact(tmp_path_factory, rs):
    path = tmp_path_factory.mktemp("r") / "r.csv"
    assert write_records_csv(rs, path) == len(rs)
    assert read_records_csv(path) == rs


def test_records_header_and_errors(tmp_path):
    path = tmp_path / "r.csv"
    write_records_csv([], path)
    assert path.read_text().strip() == ",".join(COLUMNS)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(RecordFormatError):
        read_records_csv(tmp_path / "bad.csv")
    (tmp_path / "bad2.csv").write_text(",".join(COLUMNS) + "\n1,nope,,0,0,1,0,0,1,,,\n")
    with pytest.raises(RecordFormatError):
        read_records_csv(tmp_path / "bad2.csv")


def test_single_pass_view_dedups():
    rs = [UncertaintyRecord.build(s, m, 0, 1, 0.1, 2, 0.5, single_class=1, single_confidence=0.8)
          for m in ("ttma_du", "tta") for s in range(3)]
    view = single_pass_view(rs)
    assert [r.sample_id for r in view] == [0, 1, 2]
    assert all(r.correct and r.method == "single" and r.confidence == 0.8 for r in view)
    assert list(group_by_method(rs)) == ["ttma_du", "tta"]


def test_config_defaults():
    cfg = Config.load(environ={})
    assert cfg.ttma_config().alpha == 0.2
    assert cfg.ttma_config().K == 30
    assert cfg.float("baselines", "dropout") == 0.5
    assert cfg.affine_config().rotation_deg == 45
    assert cfg.train_config().learning_rate == 0.01
    assert len(cfg.rates()) == 20
    assert set(cfg.resolved()) == set(DEFAULTS)


def test_config_file_env_and_flags(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[ttma]\nk = 10\nalpha = 0.5\n[run]\nseed = 3\n")
    cfg = Config.load(path, environ={"UQ_TTMA_ALPHA": "1.0", "UQ_RUN_SEED": "4"},
                      overrides={("run", "seed"): 5, ("run", "out"): None})
    assert cfg.ttma_config().K == 10
    assert cfg.ttma_config().alpha == 1.0
    assert cfg.seed == 5
    assert cfg.resolved()["ttma"]["k"] == "10"


@pytest.mark.parametrize("text", ["[ttma]\nk = 0\n", "[bogus]\nx = 1\n", "[ttma]\nnope = 1\n",
                                  "[train]\nepochs = ten\n", "[dataset]\ntest_fraction = 1.5\n",
                                  "not an ini file"])
def test_config_errors(tmp_path, text):
    path = tmp_path / "c.ini"
    path.write_text(text)
    with pytest.raises(ConfigError):
        Config.load(path, environ={})


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        Config.load(tmp_path / "missing.ini", environ={})
