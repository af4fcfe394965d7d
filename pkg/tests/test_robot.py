import asyncio
import math

import pytest
from hypothesis import given, strategies as st

from puppetmirror.broker import RelayBroker
from puppetmirror.client import RelayClient
from puppetmirror.model import ServoTicks, axis_degrees_to_ticks
from puppetmirror.robot import (
    RobotService,
    RobotState,
    ServoConfig,
    command,
    run_script,
    step,
    trace,
    trace_ticks,
)
from puppetmirror.wire import PosePayload, topic_robot_cmd, topic_robot_state

CFG = ServoConfig()  # 360 deg/s, 20 ms


def _ticks(pan: int, tilt: int = 512) -> ServoTicks:
    return ServoTicks(pan_ticks=pan, tilt_ticks=tilt)


class TestServoConfig:
    def test_default_step_budget(self):
        # 360 deg/s over 20 ms is 7.2 degrees, i.e. round(7.2 * 1023 / 300) ticks.
        assert CFG.max_step_ticks(20) == 25

    def test_validation(self):
        with pytest.raises(ValueError):
            ServoConfig(max_speed_dps=0)
        with pytest.raises(ValueError):
            ServoConfig(timestep_ms=0)

    @given(st.integers(min_value=1, max_value=1000))
    def test_budget_scales_with_dt(self, dt_ms):
        exact = 360.0 * dt_ms / 1000.0 * 1023 / 300.0
        assert abs(CFG.max_step_ticks(dt_ms) - exact) <= 0.5


class TestStep:
    def test_at_target_is_fixed_point(self):
        state = RobotState(current=_ticks(100), target=_ticks(100))
        assert step(state, 20, CFG).current == _ticks(100)

    def test_reaches_target_within_budget(self):
        state = RobotState(current=_ticks(500), target=_ticks(510))
        assert step(state, 20, CFG).current == _ticks(510)

    def test_clamps_to_budget(self):
        state = RobotState(current=_ticks(0, 1023), target=_ticks(1023, 0))
        moved = step(state, 20, CFG)
        assert moved.current == _ticks(25, 998)

    def test_no_overshoot_at_exact_budget(self):
        state = RobotState(current=_ticks(500), target=_ticks(525))
        assert step(state, 20, CFG).current == _ticks(525)

    def test_nonpositive_dt_is_identity(self):
        state = RobotState(current=_ticks(1), target=_ticks(1000), last_update=40)
        assert step(state, 0, CFG) is state
        assert step(state, -20, CFG) is state

    def test_full_sweep_step_count(self):
        state = RobotState(current=_ticks(0), target=_ticks(1023))
        steps = 0
        while state.current != state.target:
            state = step(state, 20, CFG)
            steps += 1
        assert steps == math.ceil(1023 / 25)  # 41

    @given(
        st.integers(min_value=0, max_value=1023),
        st.integers(min_value=0, max_value=1023),
        st.integers(min_value=1, max_value=100),
    )
    def test_step_is_rate_bounded_and_monotone(self, start, target, dt_ms):
        state = RobotState(current=_ticks(start, start), target=_ticks(target, target))
        moved = step(state, dt_ms, CFG)
        limit = CFG.max_step_ticks(dt_ms)
        for before, after in (
            (start, moved.current.pan_ticks),
            (start, moved.current.tilt_ticks),
        ):
            assert abs(after - before) <= limit
            # never moves past the target
            assert min(before, target) <= after <= max(before, target)

    def test_command_only_swaps_target(self):
        state = RobotState(current=_ticks(5), target=_ticks(5), last_update=60)
        updated = command(state, _ticks(900))
        assert updated.current == _ticks(5)
        assert updated.target == _ticks(900)
        assert updated.last_update == 60


class TestTrace:
    def test_empty(self):
        assert trace_ticks([]) == []

    def test_first_command_snaps(self):
        out = trace_ticks([(0, _ticks(700, 30))])
        assert out == [(0, _ticks(700, 30))]

    def test_constant_script_stays_put(self):
        script = [_ticks(321, 654)] * 10
        out = run_script(script)
        assert [ticks for _, ticks in out] == script

    def test_within_limit_script_lags_one_timestep(self):
        # Per-sample deltas of 10 ticks are inside the 25-tick budget, so the
        # achieved pose is the command sequence delayed by exactly one step.
        script = [_ticks(500 + 10 * i) for i in range(12)]
        out = run_script(script)
        achieved = [ticks.pan_ticks for _, ticks in out]
        expected = [script[0].pan_ticks] + [s.pan_ticks for s in script[:-1]]
        assert achieved == expected

    def test_ramp_beyond_limit_moves_at_max_rate(self):
        # Each update first pursues the previous target, then adopts the new
        # one, so the jump starts moving one timestep after it is commanded
        # and advances 25 ticks per 20 ms after that.
        script = [_ticks(0), _ticks(1023), _ticks(1023), _ticks(1023)]
        out = run_script(script)
        assert [ticks.pan_ticks for _, ticks in out] == [0, 0, 25, 50]

    def test_backward_time_snaps(self):
        # A replay restarting its clock at zero must not be rate-limited
        # against the previous take's final pose.
        cmds = [(0, _ticks(0)), (20, _ticks(1023)), (0, _ticks(600))]
        out = trace_ticks(cmds)
        assert out[-1] == (0, _ticks(600))

    def test_same_timestamp_retargets_without_motion(self):
        cmds = [(0, _ticks(0)), (20, _ticks(100)), (40, _ticks(100)), (40, _ticks(0)), (60, _ticks(0))]
        out = trace_ticks(cmds)
        pans = [ticks.pan_ticks for _, ticks in out]
        assert pans[2] == 25  # underway toward 100
        assert pans[3] == 25  # duplicate timestamp: retarget only, no motion
        assert pans[4] == 0  # next step pursues the replacement target

    def test_trace_degrees_matches_ticks(self):
        pan = axis_degrees_to_ticks(36.0)
        samples = trace([(0, _ticks(pan, 512))])
        assert samples[0].t_ms == 0
        assert samples[0].pose.pan == pytest.approx(36.0, abs=0.15)


class TestRobotService:
    def test_echoes_state_over_relay(self):
        async def run():
            broker = RelayBroker()
            await broker.start(port=0)
            try:
                robot_client = await RelayClient.connect(port=broker.port)
                driver = await RelayClient.connect(port=broker.port)
                service = RobotService(robot_client, "s1")
                await service.start()
                states = await driver.subscribe(topic_robot_state("s1"))
                await driver.ping()

                script = [0, 10, 1000, 1000]
                for i, pan in enumerate(script):
                    payload = PosePayload(seq=i, t_ms=i * 20, pan_ticks=pan, tilt_ticks=512)
                    await driver.publish(topic_robot_cmd("s1"), payload.encode())
                echoes = [
                    PosePayload.decode((await states.get(timeout=5.0)).payload)
                    for _ in range(len(script))
                ]
                # malformed command is ignored, later commands still served
                await driver.publish(topic_robot_cmd("s1"), b"\x00\x01")
                await driver.publish(
                    topic_robot_cmd("s1"),
                    PosePayload(seq=9, t_ms=80, pan_ticks=1000, tilt_ticks=512).encode(),
                )
                last = PosePayload.decode((await states.get(timeout=5.0)).payload)

                await service.stop()
                await robot_client.close()
                await driver.close()
                return echoes, last
            finally:
                await broker.close()

        echoes, last = asyncio.run(run())
        assert [(e.seq, e.t_ms) for e in echoes] == [(0, 0), (1, 20), (2, 40), (3, 60)]
        # snap on first command, one-step lag, then rate-limited pursuit of 1000
        assert [e.pan_ticks for e in echoes] == [0, 0, 10, 35]
        assert last.seq == 9
        assert last.pan_ticks == 60
