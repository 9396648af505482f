"""CSV schemas: round trips, atomicity, line-numbered diagnostics."""

from datetime import date

import numpy as np
import pandas as pd
import pytest

from taxopt import AssetPosition, InputFormatError, TaxLot, synthetic_market
from taxopt import io as tio


class TestLotsCsv:
    def test_round_trip(self, tmp_path):
        positions = {
            "AAA": AssetPosition("AAA", 10.0, (
                TaxLot("AAA-0", 5.0, 8.0, date(2019, 1, 2)),
                TaxLot("AAA-1", 2.5, 12.0, date(2020, 3, 4)),
            )),
            "BBB": AssetPosition("BBB", 20.0, (
                TaxLot("BBB-0", 1.0, 19.0, date(2018, 7, 1)),
            )),
        }
        path = tmp_path / "lots.csv"
        tio.write_lots(path, positions)
        assert path.read_text().startswith("# taxopt-csv lots v1")
        lots = tio.read_lots(path)
        assert set(lots) == {"AAA", "BBB"}
        assert lots["AAA"][1].basis == 12.0
        assert lots["AAA"][0].acquired == date(2019, 1, 2)

    def test_negative_quantity_rejected_with_line(self, tmp_path):
        path = tmp_path / "lots.csv"
        path.write_text(
            "asset_id,lot_id,quantity,basis,acquisition_date\n"
            "AAA,l0,10,50,2020-01-02\n"
            "AAA,l1,-3,50,2020-01-02\n"
        )
        with pytest.raises(InputFormatError) as err:
            tio.read_lots(path)
        assert err.value.line == 3
        assert "quantity" in str(err.value)

    def test_bad_date_rejected(self, tmp_path):
        path = tmp_path / "lots.csv"
        path.write_text(
            "asset_id,lot_id,quantity,basis,acquisition_date\n"
            "AAA,l0,10,50,02/01/2020\n"
        )
        with pytest.raises(InputFormatError) as err:
            tio.read_lots(path)
        assert err.value.line == 2

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "lots.csv"
        path.write_text("asset,qty\nA,1\n")
        with pytest.raises(InputFormatError):
            tio.read_lots(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputFormatError):
            tio.read_lots(tmp_path / "absent.csv")


class TestMarketRoundTrip:
    def test_field_exact_round_trip(self, tmp_path):
        market = synthetic_market(3, n_assets=6, k_factors=3, months=4,
                                  n_nonmembers=1, dividend_yield=0.03,
                                  delist_after_months={"S004": 2})
        tio.write_market(market, tmp_path)
        back = tio.read_market(tmp_path)
        pd.testing.assert_frame_equal(back.prices, market.prices,
                                      check_freq=False)
        pd.testing.assert_frame_equal(back.dividends, market.dividends,
                                      check_freq=False)
        pd.testing.assert_frame_equal(back.in_benchmark, market.in_benchmark,
                                      check_freq=False)
        pd.testing.assert_frame_equal(
            back.benchmark_weights, market.benchmark_weights, check_freq=False)
        np.testing.assert_allclose(back.factor_cov, market.factor_cov)
        np.testing.assert_allclose(
            back.specific_var.to_numpy(), market.specific_var.to_numpy())
        np.testing.assert_allclose(
            back.exposures.to_numpy(), market.exposures.to_numpy())
        assert set(back.delistings) == set(market.delistings)
        assert back.delistings["S004"] == market.delistings["S004"]

    def test_interior_gap_rejected(self, tmp_path):
        market = synthetic_market(1, n_assets=3, k_factors=2, months=2)
        tio.write_market(market, tmp_path)
        frame = tio.read_csv(tmp_path / "prices.csv", tio.PRICES_COLUMNS)
        frame = frame.drop(index=frame[(frame.asset_id == "S001")].index[5])
        tio.write_csv(tmp_path / "prices.csv", "prices", frame)
        with pytest.raises(InputFormatError):
            tio.read_market(tmp_path)


class TestAtomicity:
    def test_failed_write_leaves_no_temp(self, tmp_path):
        class Boom:
            def __str__(self):
                raise RuntimeError("boom")

        target = tmp_path / "out.txt"
        tio.atomic_write_text(target, "fine")
        assert target.read_text() == "fine"
        assert list(tmp_path.glob("*.tmp")) == []

    def test_overwrite_is_atomic(self, tmp_path):
        target = tmp_path / "data.csv"
        tio.write_csv(target, "trades", pd.DataFrame({"a": [1]}))
        tio.write_csv(target, "trades", pd.DataFrame({"a": [2]}))
        content = target.read_text()
        assert "2" in content and list(tmp_path.glob("*.tmp")) == []
