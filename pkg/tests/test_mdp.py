"""Tests for explicit MDP construction and the textual dump."""

import io
from dataclasses import replace

import numpy as np
import pytest

from pcharts.exceptions import PChartsError, StateLimitError
from pcharts.expr import InState
from pcharts.mdp import DEADLOCK, build_mdp, dump_mdp, load_mdp, read_mdp, write_mdp
from pcharts.normalizer import apply_digital_clocks, lower_predicate, normalize

from .conftest import load_bundled


def build(name, **kwargs):
    system = apply_digital_clocks(normalize(load_bundled(name)))
    return system, build_mdp(system, **kwargs)


class TestBuildMdp:
    """Tests for build_mdp."""

    def test_sender_receiver(self):
        _, (mdp, stats) = build("sender_receiver")
        assert mdp.num_states == 3
        assert mdp.num_actions == 3
        assert mdp.num_transitions == 5
        assert stats.num_states == 3
        assert stats.num_deadlocks == 0
        assert mdp.display(0) == {"root": "System", "sender": "Sleeping", "receiver": "Listening"}

    def test_action_labels_are_sorted_per_state(self):
        _, (mdp, _) = build("sender_receiver")
        assert [mdp.action_labels[a] for a in mdp.actions_of(0)] == ["wup"]

    def test_deadlock_becomes_self_loop(self):
        _, (mdp, stats) = build("onoff")
        assert (mdp.num_states, mdp.num_transitions) == (2, 2)
        assert stats.num_deadlocks == 1
        (action,) = mdp.actions_of(1)
        assert mdp.action_labels[action] == DEADLOCK
        assert mdp.distributions[action] == ((1, 1),)

    def test_rewards(self):
        system, (mdp, _) = build("sender_receiver")
        np.testing.assert_allclose(mdp.state_rewards["energy"], [0.1, 2.0, 2.0])
        np.testing.assert_allclose(mdp.action_rewards["tran"], [0.0, 1.0, 1.0])
        assert mdp.reward_names() == ["energy", "tran"]

    def test_satisfying(self):
        chart = load_bundled("sender_receiver")
        system, (mdp, _) = build("sender_receiver")
        off = lower_predicate(system, InState(chart.resolve("Off")))
        assert mdp.satisfying(off).tolist() == [False, False, True]

    def test_timed_model(self):
        _, (mdp, stats) = build("probe")
        assert mdp.timed
        assert stats.time_base == "1s"
        assert mdp.tick_actions.any()

    def test_state_limit(self):
        with pytest.raises(StateLimitError) as excinfo:
            build("rfid", state_limit=5)
        assert excinfo.value.details["limit"] == 5

    def test_transition_matrix(self):
        _, (mdp, _) = build("chain")
        matrix = mdp.transitions
        assert matrix.shape == (mdp.num_actions, mdp.num_states)
        np.testing.assert_allclose(np.asarray(matrix.sum(axis=1)).ravel(), 1.0)


class TestDump:
    """Tests for the MDP dump format."""

    def test_read_back(self):
        _, (mdp, _) = build("sender_receiver")
        buffer = io.StringIO()
        write_mdp(mdp, buffer)
        buffer.seek(0)
        loaded = read_mdp(buffer)
        assert loaded.states == mdp.states
        assert loaded.action_labels == mdp.action_labels
        assert loaded.distributions == mdp.distributions
        assert loaded.variables == tuple(replace(v, node=None) for v in mdp.variables)
        np.testing.assert_allclose(loaded.state_rewards["energy"], mdp.state_rewards["energy"])

    def test_file_round_trip_keeps_time_base(self, tmp_path):
        _, (mdp, _) = build("probe")
        path = tmp_path / "probe.mdp"
        dump_mdp(mdp, path)
        loaded = load_mdp(path)
        assert loaded.time_base_us == 1_000_000
        assert loaded.deadlocks == mdp.deadlocks
        np.testing.assert_array_equal(loaded.state_ptr, mdp.state_ptr)

    def test_bad_header(self):
        with pytest.raises(PChartsError):
            read_mdp(["not a dump\n"])
