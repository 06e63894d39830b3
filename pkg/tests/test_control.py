"""Funnel controller: scalar law, vector law, channel maps, independence."""
import ast
import inspect
import math

import numpy as np
import pytest

import tubenav.control as control_module
from tubenav.control import (CHANNEL_MAPS, ControllerGains, control_input,
                             control_vector, gain_term, normalized_error,
                             transformed_error)
from tubenav.errors import DegenerateTubeError, FunnelViolationError
from tubenav.geometry import HyperRect
from tubenav.tubes import build_reachability_tube


class TestNormalizedError:
    def test_zero_at_center(self):
        assert normalized_error(1.0, 0.0, 2.0) == 0.0

    def test_hand_computed_value(self):
        assert normalized_error(1.5, 0.0, 2.0) == pytest.approx(0.5)

    def test_plus_minus_one_on_boundaries(self):
        assert normalized_error(2.0, 0.0, 2.0) == 1.0
        assert normalized_error(0.0, 0.0, 2.0) == -1.0

    def test_degenerate_bounds_rejected(self):
        with pytest.raises(DegenerateTubeError):
            normalized_error(1.0, 2.0, 2.0)


class TestControlInput:
    def test_zero_at_center(self):
        assert control_input(1.0, 0.0, 2.0, kappa=7.0) == 0.0

    def test_independent_oracle_value(self):
        # e = 0.5, eps = ln 3, xi = 4 / (0.75 * 2); assembled by hand
        expected = -1.0 * (4.0 / (0.75 * 2.0)) * math.log(3.0)
        assert expected == pytest.approx(-2.9296327697816263, abs=1e-15)
        assert control_input(1.5, 0.0, 2.0, kappa=1.0) == pytest.approx(
            expected, abs=1e-9)

    def test_component_formulas(self):
        e = normalized_error(1.5, 0.0, 2.0)
        assert transformed_error(e) == pytest.approx(math.log(3.0))
        assert gain_term(e, 0.0, 2.0) == pytest.approx(8.0 / 3.0)

    def test_repulsion_grows_near_boundary(self):
        near = control_input(1.999999, 0.0, 2.0, kappa=1.0)
        nearer = control_input(1.9999999, 0.0, 2.0, kappa=1.0)
        assert nearer < near < -1e3

    def test_boundary_state_raises(self):
        with pytest.raises(FunnelViolationError):
            control_input(2.0, 0.0, 2.0, kappa=1.0)
        with pytest.raises(FunnelViolationError):
            control_input(-0.5, 0.0, 2.0, kappa=1.0)

    def test_kappa_must_be_positive(self):
        with pytest.raises(ValueError):
            control_input(1.0, 0.0, 2.0, kappa=0.0)

    def test_odd_symmetry_about_center(self):
        lo, up, center = -3.0, 7.0, 2.0
        for a in np.linspace(1e-6, 4.999, 1000):
            left = control_input(center - a, lo, up, kappa=2.0)
            right = control_input(center + a, lo, up, kappa=2.0)
            assert abs(left + right) <= 1e-12 * max(1.0, abs(left))

    def test_strictly_decreasing_in_state(self):
        xs = np.linspace(0.001, 1.999, 1000)
        us = [control_input(float(x), 0.0, 2.0, kappa=1.0) for x in xs]
        assert all(b < a for a, b in zip(us, us[1:]))


class TestControlVector:
    def make_tube(self):
        arena = HyperRect.from_bounds([(0, 10), (0, 10)])
        return build_reachability_tube(HyperRect.from_bounds([(0, 2), (4, 6)]),
                                       HyperRect.from_bounds([(8, 10), (4, 6)]),
                                       10.0, arena)

    def test_zero_at_tube_center(self):
        tube = self.make_tube()
        center = tube.cross_section(3.0).center
        u = control_vector(center, tube, 3.0, ControllerGains((1.0, 1.0)))
        np.testing.assert_allclose(u, [0.0, 0.0], atol=1e-12)

    def test_scalar_law_embedded_per_dimension(self):
        tube = self.make_tube()
        cs = tube.cross_section(0.0)  # dim 0 is [0, 2] at t=0
        state = np.array([1.5, cs.dims[1].center])
        u = control_vector(state, tube, 0.0, ControllerGains((1.0, 1.0)))
        assert u[0] == pytest.approx(-2.9296327697816263, abs=1e-9)
        assert u[1] == 0.0

    def test_violating_dimension_is_named(self):
        tube = self.make_tube()
        with pytest.raises(FunnelViolationError) as err:
            control_vector([1.0, 9.0], tube, 0.0, ControllerGains((1.0, 1.0)))
        assert err.value.dim == 1
        assert err.value.time == 0.0

    def test_gain_count_checked(self):
        tube = self.make_tube()
        with pytest.raises(ValueError):
            control_vector([1.0, 5.0], tube, 0.0, ControllerGains((1.0,)))

    def test_gains_must_be_positive(self):
        with pytest.raises(ValueError):
            ControllerGains((1.0, -2.0))


class TestChannelMaps:
    def test_identity_passthrough(self):
        u = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(CHANNEL_MAPS["identity"](None, u), u)

    def test_inverse_rotation_undoes_heading_rotation(self):
        # composing the map with the plant's heading rotation must give the
        # original world-frame command back
        for heading in np.linspace(-math.pi, math.pi, 25):
            state = np.array([0.0, 0.0, heading])
            u_world = np.array([1.3, -0.7, 0.2])
            u_body = CHANNEL_MAPS["inverse_rotation"](state, u_world)
            c, s = math.cos(heading), math.sin(heading)
            rotated = np.array([c * u_body[0] - s * u_body[1],
                                s * u_body[0] + c * u_body[1],
                                u_body[2]])
            np.testing.assert_allclose(rotated, u_world, atol=1e-12)

    def test_quarter_turn_swaps_axes(self):
        state = np.array([0.0, 0.0, math.pi / 2])
        u_body = CHANNEL_MAPS["inverse_rotation"](state, np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(u_body, [0.0, -1.0, 0.0], atol=1e-12)


def test_controller_module_never_imports_plant_models():
    """The control law must stay usable with no knowledge of any dynamics."""
    tree = ast.parse(inspect.getsource(control_module))
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            imported.update(alias.name for alias in node.names)
        elif isinstance(node, ast.ImportFrom):
            imported.add(node.module or "")
    assert not any("dynamics" in name or "simulation" in name
                   for name in imported), imported
