"""Smoke test for the cellguard_py extension module.

Build and install first:  pip install --no-build-isolation ./crates/py
Then run:                 python python/smoke_test.py   (or pytest python/)
"""

import json

import cellguard_py as cg

C1 = '''def custom_agg(col):
    return len(col) * 2
def aggregate(df, fns):
    out = {}
    for k in list(fns):
        out[k] = fns[k](df[k])
    return out
df_x = {"A": [1, 2], "B": [3, 4, 5]}
df_y = {"A": [6], "B": [7, 8]}
'''
C2 = 'agg_by_col = {"A": lambda col: len(col), "B": custom_agg}\n'
C3 = "df_agg_x = aggregate(df_x, agg_by_col)\ndf_agg_y = aggregate(df_y, agg_by_col)\n"


def agg_notebook():
    nb = cg.Notebook()
    for cid, src in [("c1", C1), ("c2", C2), ("c3", C3)]:
        nb.upsert_cell(src, cell_id=cid)
        assert nb.run_cell(cid)["result"]["status"] == "ok"
    nb.upsert_cell(C1.replace("* 2", "* 3"), cell_id="c1")
    nb.run_cell("c1")
    return nb


def test_stale_gate_and_refresher():
    nb = agg_notebook()
    report = nb.highlights()
    assert report["counter"] == 4
    assert report["stale"] == ["c3"]
    assert report["refresher"] == ["c2"]

    lineage = nb.lineage()
    try:
        nb.run_cell("c3")
    except cg.StaleWarning as w:
        assert w.args[1] == ["agg_by_col"]
    else:
        raise AssertionError("expected StaleWarning")
    assert nb.counter == 4
    assert nb.lineage() == lineage

    resp = nb.run_cell("c3", confirm=True)
    assert resp["result"]["counter"] == 5
    assert len(nb.audit()) == 1


def test_cells_and_errors():
    nb = cg.Notebook(refresher="naive")
    first = nb.upsert_cell("x = 1")
    nb.upsert_cell("y = x + 1", position=0)
    assert nb.cells[1] == first
    nb.run_cell(first)
    assert nb.globals() == {"x": 1}
    try:
        nb.run_cell("missing")
    except KeyError:
        pass
    else:
        raise AssertionError("expected KeyError")
    try:
        cg.check_syntax("x = = 1")
    except ValueError as e:
        assert "5" in str(e)
    else:
        raise AssertionError("expected ValueError")


def test_replay():
    sources = [C1, C2, C3, C1.replace("* 2", "* 3"), C3]
    log = "\n".join(json.dumps({"counter": i + 1, "source": s}) for i, s in enumerate(sources))
    rec = cg.replay([log])
    assert rec["sessions"] == 1
    assert rec["safety_error_count"] == 1
    assert "H_s" in json.dumps(rec)


if __name__ == "__main__":
    test_stale_gate_and_refresher()
    test_cells_and_errors()
    test_replay()
    print("ok")
