import calendar
import math

import numpy as np
import pytest

from scenario_poi.ingest import (
    Catalog,
    CheckIn,
    ConfigError,
    ParseError,
    Trajectory,
    chronological_split,
    filter_checkins,
    parse_checkins,
    segment_trajectories,
    validation_split,
)

H = 3600.0

FSQ = "{u}\t{v}\t4bf58dd8d48988d1c4941735\t{cat}\t40.7{i}\t-73.98\t-240\tTue Apr 03 18:0{i}:06 +0000 2012\n"


def _ck(user, poi, hours):
    return CheckIn(user, poi, hours * H, 40.0, -73.0)


def test_parse_single_foursquare_line(tmp_path):
    f = tmp_path / "nyc.tsv"
    f.write_text(FSQ.format(u="470", v="49bbd6c0", cat="Bar", i=1))
    checkins, cat = parse_checkins(f, "foursquare")
    assert len(checkins) == 1 and cat.n_users == 1 and cat.n_pois == 1
    c = checkins[0]
    assert (c.user_id, c.poi_id, c.category, c.tz_offset) == (0, 0, "Bar", -240)
    assert c.timestamp == calendar.timegm((2012, 4, 3, 18, 1, 6))


def test_shared_venue_deduplicated(tmp_path):
    f = tmp_path / "nyc.tsv"
    f.write_text(FSQ.format(u="1", v="A", cat="Bar", i=1) + FSQ.format(u="2", v="A", cat="Bar", i=2))
    _, cat = parse_checkins(f, "foursquare")
    assert cat.n_pois == 1 and cat.n_users == 2


def test_gowalla_format(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("0\t2010-10-19T23:55:27Z\t30.2359091167\t-97.7951395833\t22847\n"
                 "0\t2010-10-18T22:17:43Z\t30.2691029532\t-97.7493953705\t420315\n")
    checkins, cat = parse_checkins(f, "gowalla", tz_offset=-300)
    assert cat.pois[0].external_id == "22847"
    # sorted by time within the user, catalog keeps file order
    assert [c.poi_id for c in checkins] == [1, 0]
    assert all(c.category == "" and c.tz_offset == -300 for c in checkins)


def test_malformed_line_reports_line_number(tmp_path):
    f = tmp_path / "bad.tsv"
    f.write_text(FSQ.format(u="1", v="A", cat="Bar", i=1) + "1\tB\tonly three\n")
    with pytest.raises(ParseError) as err:
        parse_checkins(f, "foursquare")
    assert err.value.lineno == 2


def test_unknown_format(tmp_path):
    f = tmp_path / "x"
    f.write_text("")
    with pytest.raises(ConfigError):
        parse_checkins(f, "yelp")


def test_catalog_round_trip(tmp_path):
    cat = Catalog()
    for u in ("b", "a", "c"):
        cat.user_index(u)
    cat.poi_index("x", 1.5, 2.25, "Hotel")
    cat.poi_index("y", -3.0, 100.0, "")
    cat.save(tmp_path)
    again = Catalog.load(tmp_path)
    assert again.users == cat.users and again.pois == cat.pois


def test_windows_example():
    trajs = segment_trajectories([_ck(0, 1, 0), _ck(0, 2, 5), _ck(0, 3, 30)])
    assert len(trajs) == 1 and [c.poi_id for c in trajs[0].checkins] == [1, 2]


def test_window_boundary_inclusion():
    trajs = segment_trajectories([_ck(0, 1, 0), _ck(0, 2, 23 + 59 / 60)])
    assert len(trajs) == 1 and len(trajs[0]) == 2
    # exactly 24h later opens a new window
    assert segment_trajectories([_ck(0, 1, 0), _ck(0, 2, 24)]) == []


def _window_scan_oracle(times_by_user):
    count = 0
    for times in times_by_user.values():
        i = 0
        while i < len(times):
            j = i
            while j < len(times) and times[j] < times[i] + 24 * H:
                j += 1
            count += (j - i) >= 2
            i = j
    return count


def test_trajectory_count_matches_window_scan():
    rng = np.random.default_rng(7)
    checkins, by_user = [], {}
    for u in range(100):
        gaps = rng.exponential(10 * H, size=rng.poisson(25) + 1)
        times = np.cumsum(gaps).tolist()
        by_user[u] = times
        checkins += [CheckIn(u, int(rng.integers(50)), t, 0.0, 0.0) for t in times]
    trajs = segment_trajectories(checkins)
    assert len(trajs) == _window_scan_oracle(by_user)
    # partition: before the length filter every check-in is in exactly one window
    everything = segment_trajectories(checkins, min_length=1)
    assert sum(len(t) for t in everything) == len(checkins)
    for t in trajs:
        assert t.checkins[-1].timestamp < t.window_start + 24 * H


def _trajs(user, n):
    return [Trajectory(user, (_ck(user, 0, 48 * k), _ck(user, 1, 48 * k + 1)), 48 * k * H) for k in range(n)]


def test_split_counts():
    train, test = chronological_split(_trajs(0, 5))
    assert (len(train), len(test)) == (4, 1)
    train, test = chronological_split(_trajs(0, 1))
    assert (len(train), len(test)) == (1, 0)


def test_split_monotone_per_user():
    rng = np.random.default_rng(3)
    trajs = []
    for u in range(40):
        trajs += _trajs(u, int(rng.integers(1, 15)))
    rng.shuffle(trajs)
    train, test = chronological_split(trajs)
    for u in range(40):
        tr = [t.window_start for t in train if t.user_id == u]
        te = [t.window_start for t in test if t.user_id == u]
        assert len(tr) == math.ceil(0.8 * (len(tr) + len(te)))
        if te:
            assert max(tr) <= min(te)


def test_validation_keeps_training_data():
    fit, val = validation_split(_trajs(0, 20) + _trajs(1, 3))
    assert sum(t.user_id == 0 for t in val) == 2
    assert sum(t.user_id == 1 for t in val) == 0
    assert max(t.window_start for t in fit if t.user_id == 0) < min(t.window_start for t in val)


def test_filter_reindexes():
    cat = Catalog()
    for u in ("a", "b"):
        cat.user_index(u)
    for p in ("x", "y"):
        cat.poi_index(p, 0.0, 0.0)
    cks = [CheckIn(0, 0, 1.0, 0, 0), CheckIn(0, 1, 2.0, 0, 0), CheckIn(1, 1, 3.0, 0, 0), CheckIn(1, 1, 4.0, 0, 0)]
    out, new = filter_checkins(cks, cat, min_user=2, min_poi=2)
    assert new.pois[0].external_id == "y" and new.n_pois == 1
    assert new.users == ["b"] and all(c.user_id == 0 and c.poi_id == 0 for c in out)


def test_checkin_coordinate_invariant():
    with pytest.raises(ValueError):
        CheckIn(0, 0, 0.0, 91.0, 0.0)
