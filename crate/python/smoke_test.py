"""Smoke test for the gpsphen_py extension module.

Build the module first (see README), then run:

    PYTHONPATH=target/python python3 python/smoke_test.py
"""

import tempfile
from pathlib import Path

import gpsphen_py as g


def main():
    assert abs(g.haversine_m(0.0, 0.0, 0.0, 1.0) - 111194.9) < 0.1
    assert g.intradaily_variability([0.0, 1.0] * 24) == 4.0
    assert abs(g.place_entropy([0.5, 0.25, 0.25]) - 0.94639) < 1e-4
    w = g.welch_t([10, 12, 14, 16], [11, 13, 15, 17])
    assert abs(w.t_statistic + 0.5477) < 1e-3 and abs(w.p_value - 0.604) < 1e-3
    assert g.auc([0.9, 0.2, 0.1, 0.8], [True, True, False, False]) == 0.75

    rows = [[float((i * j) % 7) for j in range(5)] for i in range(40)]
    pca = g.Pca(rows, n_components=5)
    assert abs(sum(pca.explained_variance_ratio) - 1.0) < 1e-9

    try:
        g.welch_t([1.0], [2.0, 3.0])
    except g.DataError:
        pass
    else:
        raise AssertionError("expected DataError")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        n, days = g.synth_study(str(tmp / "in"), participants=6, days=20, seed=4)
        assert n == 12 and days == 240
        p = g.Pipeline(
            str(tmp / "out"),
            trace_dir=str(tmp / "in" / "traces"),
            roster=str(tmp / "in" / "roster.csv"),
            survey=str(tmp / "in" / "survey.csv"),
            skip_forest=True,
        )
        assert p.ingest()["participants"] == 12
        p.ddp()
        pcs = p.pca()
        assert len(pcs["explained_variance_ratio"]) == 10
        p.circadian()
        p.phenotypes()
        rows = p.compare()
        assert any(r["metric"] == "num.pls" for r in rows)
        predict = p.predict()
        assert predict["results"][0]["method"] == "logistic"

        try:
            g.Pipeline(str(tmp / "empty")).pca()
        except g.ConfigError:
            pass
        else:
            raise AssertionError("expected ConfigError")

    print(f"gpsphen_py {g.__version__} (format {g.FORMAT_VERSION}): smoke test passed")


if __name__ == "__main__":
    main()
