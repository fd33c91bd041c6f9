"""Adapter behavior against a live service: spaces, decoding, parity."""

from __future__ import annotations

import socket
import threading
import time

import numpy as np
import pytest
import uvicorn

from towerforge.actions import unflatten_action
from towerforge.simulator import EpisodeConfig, Simulator

from towerforge_gym import (
    AdapterConfig,
    AdapterError,
    ConnectionFailed,
    DiscreteSpace,
    MultiDiscreteSpace,
    TowerEnv,
)


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def service_url():
    from towerforge.service.app import create_app

    port = _free_port()
    server = uvicorn.Server(
        uvicorn.Config(create_app(capacity=16), host="127.0.0.1", port=port, log_level="error")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("test service never started")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def make_env(service_url, **kwargs) -> TowerEnv:
    config = AdapterConfig(address=service_url, **kwargs)
    return TowerEnv(config)


def test_declared_spaces(service_url):
    with make_env(service_url) as env:
        assert env.action_space == DiscreteSpace(54)
        assert env.observation_space.shape == (84, 84)
        assert env.observation_space.dtype == "uint8"
        assert env.aux_space.shape == (2,)
    with make_env(service_url, action_mode="multi") as env:
        assert env.action_space == MultiDiscreteSpace((3, 3, 3, 2))


def test_reset_shapes_and_determinism(service_url):
    with make_env(service_url) as env:
        raster, aux = env.reset(tower_seed=7)
        assert raster.shape == (84, 84) and raster.dtype == np.uint8
        assert aux.shape == (2,)
        assert aux[0] == 0  # keys
        assert aux[1] == 1800  # time
        again_raster, again_aux = env.reset(tower_seed=7)
        assert np.array_equal(raster, again_raster)
        assert np.array_equal(aux, again_aux)


def test_retina_raster_size(service_url):
    with make_env(service_url, obs_size=168) as env:
        raster, _ = env.reset(tower_seed=1)
        assert raster.shape == (168, 168)
        assert env.observation_space.contains(raster)


def test_step_tuple_and_info(service_url):
    with make_env(service_url) as env:
        env.reset(tower_seed=3)
        (raster, aux), reward, done, info = env.step(0)
        assert raster.shape == (84, 84) and aux.shape == (2,)
        assert reward == 0.0 and done is False
        assert info["floor_index"] == 0 and info["outcome"] is None
        assert set(info["counters"]) == {"floors", "keys", "doors", "puzzles", "orbs"}


def test_render_matches_last_observation(service_url):
    with make_env(service_url) as env:
        env.reset(tower_seed=4)
        (raster, _), *_ = env.step(18)
        assert np.array_equal(env.render(), raster)


def test_scripted_500_steps_match_in_process_rewards(service_url):
    episode = 0
    local = Simulator(EpisodeConfig(tower_seed=episode))
    local.reset()
    with make_env(service_url) as env:
        env.reset(tower_seed=episode)
        for step in range(500):
            if local.done:
                episode += 1
                local = Simulator(EpisodeConfig(tower_seed=episode))
                local.reset()
                env.reset(tower_seed=episode)
            action = (step * 11 + 5) % 54
            (raster, aux), reward, done, info = env.step(action)
            mirror = local.step_flat(action)
            assert reward == mirror.reward, f"reward diverges at step {step}"
            assert done == mirror.done
            assert info["floor_index"] == mirror.floor
            assert aux[0] == mirror.keys and aux[1] == mirror.time_remaining
            assert np.array_equal(raster, local.render_observation())


def test_multi_discrete_parity_with_flat(service_url):
    flat_env = make_env(service_url)
    multi_env = make_env(service_url, action_mode="multi")
    try:
        flat_env.reset(tower_seed=9)
        multi_env.reset(tower_seed=9)
        for code in (18, 7, 31, 0, 53):
            a = unflatten_action(code)
            (r1, x1), rew1, d1, _ = flat_env.step(code)
            (r2, x2), rew2, d2, _ = multi_env.step((a.move_fb, a.move_lr, a.camera, a.jump))
            assert rew1 == rew2 and d1 == d2
            assert np.array_equal(r1, r2) and np.array_equal(x1, x2)
    finally:
        flat_env.close()
        multi_env.close()


def test_invalid_actions_are_rejected_client_side(service_url):
    with make_env(service_url) as env:
        env.reset()
        with pytest.raises(AdapterError) as exc:
            env.step(54)
        assert exc.value.code == "InvalidAction"
        with pytest.raises(AdapterError):
            env.step(True)
    with make_env(service_url, action_mode="multi") as env:
        env.reset()
        with pytest.raises(AdapterError) as exc:
            env.step((3, 0, 0, 0))
        assert exc.value.code == "OutOfRange"
        with pytest.raises(AdapterError):
            env.step((0, 0, 0))


def test_episode_done_propagates(service_url):
    with make_env(service_url) as env:
        env.reset(starting_time=3)
        _, _, done, info = env.step(0)
        assert done is True and info["outcome"] == "timeout"
        with pytest.raises(AdapterError) as exc:
            env.step(0)
        assert exc.value.code == "EpisodeDone"
        raster, _ = env.reset()
        assert raster.shape == (84, 84)


def test_step_before_reset_fails(service_url):
    with make_env(service_url) as env:
        with pytest.raises(AdapterError) as exc:
            env.step(0)
        assert exc.value.code == "NotStarted"


def test_close_releases_the_server_session(service_url):
    import httpx

    env = make_env(service_url)
    env.reset()
    before = httpx.get(f"{service_url}/v1/health").json()["sessions"]
    env.close()
    after = httpx.get(f"{service_url}/v1/health").json()["sessions"]
    assert after == before - 1


def test_unreachable_server_raises_connection_failed():
    config = AdapterConfig(address=f"http://127.0.0.1:{_free_port()}")
    with pytest.raises(ConnectionFailed):
        TowerEnv(config)


def test_config_validation():
    with pytest.raises(ValueError):
        AdapterConfig(action_mode="chorded")
    with pytest.raises(ValueError):
        AdapterConfig(obs_size=96)


def test_auto_start_boots_and_stops_a_server():
    port = _free_port()
    config = AdapterConfig(address=f"http://127.0.0.1:{port}", auto_start=True)
    env = TowerEnv(config)
    try:
        raster, aux = env.reset(tower_seed=2)
        assert raster.shape == (84, 84)
        assert env._server is not None and env._server.poll() is None
    finally:
        env.close()
    assert env._server is None
