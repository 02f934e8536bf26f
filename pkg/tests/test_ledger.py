import numpy as np
import pytest

from app.exceptions.lab import LedgerError
from app.schemas.ledger import COMPRESSIBLE_COLUMNS, RunLedger


def _transport_row(t: float) -> dict:
    return {"t": t, "f_inf": 1.0, "f_b0_inf1": 2.0, "f_mass": 3.0, "grad_v_inf": 2.0 * t, "div_v_b_half_4_1": 1.0}


@pytest.fixture
def transport_ledger() -> RunLedger:
    ledger = RunLedger.transport("shear", config_hash="abc123")
    for t in np.linspace(0.0, 1.0, 11):
        ledger.append(_transport_row(float(t)))
    return ledger


class TestRunLedger:
    def test_rejects_non_increasing_time(self, transport_ledger):
        with pytest.raises(LedgerError):
            transport_ledger.append(_transport_row(1.0))

    def test_rejects_missing_columns(self):
        ledger = RunLedger.transport("x")
        with pytest.raises(LedgerError):
            ledger.append({"t": 0.0})

    def test_accumulator_is_trapezoid_integral(self, transport_ledger):
        # int_0^t 2s ds = t^2, exact for the trapezoid rule on a linear integrand
        np.testing.assert_allclose(transport_ledger.column("grad_v_l1"), transport_ledger.times**2, atol=1e-14)
        assert transport_ledger.final("div_b_half_l1") == pytest.approx(1.0)

    def test_unknown_column(self, transport_ledger):
        with pytest.raises(LedgerError):
            transport_ledger.column("nope")

    def test_require_reports_missing(self, transport_ledger):
        with pytest.raises(LedgerError):
            transport_ledger.require("f_inf", "omega_inf")

    def test_require_rejects_empty(self):
        with pytest.raises(LedgerError):
            RunLedger.transport("empty").require("t")

    def test_until_interpolates_between_rows(self, transport_ledger):
        cut = transport_ledger.until(0.55)
        assert cut.final("t") == pytest.approx(0.55)
        assert cut.final("grad_v_inf") == pytest.approx(1.1)
        assert cut.final("grad_v_l1") == pytest.approx(0.55**2, rel=1e-12)
        assert len(transport_ledger) == 11

    def test_until_on_a_row_keeps_it(self, transport_ledger):
        cut = transport_ledger.until(0.5)
        assert len(cut) == 6
        assert cut.final("t") == pytest.approx(0.5)

    def test_until_past_the_end_is_a_copy(self, transport_ledger):
        cut = transport_ledger.until(2.0)
        assert cut.rows == transport_ledger.rows
        cut.append(_transport_row(3.0))
        assert len(transport_ledger) == 11

    def test_until_before_the_start(self, transport_ledger):
        with pytest.raises(LedgerError):
            transport_ledger.until(-1.0)

    def test_single_row_accumulates_zero(self):
        ledger = RunLedger.transport("one")
        ledger.append(_transport_row(0.0))
        assert ledger.final("grad_v_l1") == 0.0

    def test_csv_roundtrip(self, transport_ledger, tmp_path):
        path = transport_ledger.to_csv(tmp_path / "shear.csv")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# machlab ledger v1 run_id=shear config_hash=abc123")
        assert lines[1].split(",")[-2:] == ["grad_v_l1", "div_b_half_l1"]
        loaded = RunLedger.from_csv(path)
        assert loaded.columns == transport_ledger.columns
        assert loaded.accumulators == transport_ledger.accumulators
        assert loaded.config_hash == "abc123"
        np.testing.assert_array_equal(loaded.column("grad_v_inf"), transport_ledger.column("grad_v_inf"))

    def test_csv_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(LedgerError):
            RunLedger.from_csv(path)

    def test_csv_missing_file(self, tmp_path):
        with pytest.raises(LedgerError):
            RunLedger.from_csv(tmp_path / "absent.csv")

    def test_compressible_accumulators(self):
        ledger = RunLedger.compressible("eps=0.1")
        assert ledger.columns == COMPRESSIBLE_COLUMNS
        assert ledger.accumulators["V_eps"] == ("grad_v_inf", "grad_c_inf")
