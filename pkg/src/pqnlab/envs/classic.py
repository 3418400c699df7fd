"""Vectorised CartPole and Acrobot with the classic-control constants."""
from __future__ import annotations

import numpy as np

from .base import VecEnv


class CartPole(VecEnv):
    """Cart-pole balancing: +1 per step, ends when the pole passes 12 degrees or the
    cart leaves [-2.4, 2.4]; truncated after ``max_steps`` (500)."""

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    length = 0.5  # half the pole length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12 * 2 * np.pi / 360
    x_threshold = 2.4
    init_range = 0.05

    def __init__(self, num_envs: int = 1, max_steps: int = 500, instance_offset: int = 0):
        super().__init__(num_envs, instance_offset)
        self.obs_dim = 4
        self.num_actions = 2
        self.r_max = 1.0
        self.max_steps = max_steps
        self.state = np.zeros((num_envs, 4))
        self.t = np.zeros(num_envs, dtype=int)

    def _reset_instances(self, idx):
        for i in idx:
            self.state[i] = self.rngs[i].uniform(-self.init_range, self.init_range, size=4)
        self.t[idx] = 0

    def _transition(self, actions):
        x, x_dot, theta, theta_dot = self.state.T
        force = np.where(actions == 1, self.force_mag, -self.force_mag)
        cos, sin = np.cos(theta), np.sin(theta)
        total_mass = self.masspole + self.masscart
        pml = self.masspole * self.length
        temp = (force + pml * theta_dot ** 2 * sin) / total_mass
        theta_acc = (self.gravity * sin - cos * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * cos ** 2 / total_mass))
        x_acc = temp - pml * theta_acc * cos / total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * x_acc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * theta_acc
        self.state = np.stack([x, x_dot, theta, theta_dot], axis=1)
        self.t += 1
        terminated = (np.abs(x) > self.x_threshold) | (np.abs(theta) > self.theta_threshold)
        truncated = self.t >= self.max_steps
        return np.ones(self.num_envs), terminated, truncated

    def _observe(self, idx):
        return self.state[idx].copy()


class Acrobot(VecEnv):
    """Two-link swing-up: -1 per step until the tip rises one link length above the pivot."""

    dt = 0.2
    link_length_1 = 1.0
    link_mass_1 = 1.0
    link_mass_2 = 1.0
    link_com_pos_1 = 0.5
    link_com_pos_2 = 0.5
    link_moi = 1.0
    max_vel_1 = 4 * np.pi
    max_vel_2 = 9 * np.pi
    torques = np.array([-1.0, 0.0, 1.0])

    def __init__(self, num_envs: int = 1, max_steps: int = 500, instance_offset: int = 0):
        super().__init__(num_envs, instance_offset)
        self.obs_dim = 6
        self.num_actions = 3
        self.r_max = 1.0
        self.max_steps = max_steps
        self.state = np.zeros((num_envs, 4))
        self.t = np.zeros(num_envs, dtype=int)

    def _reset_instances(self, idx):
        for i in idx:
            self.state[i] = self.rngs[i].uniform(-0.1, 0.1, size=4)
        self.t[idx] = 0

    def _dsdt(self, s, a):
        m1, m2 = self.link_mass_1, self.link_mass_2
        l1 = self.link_length_1
        lc1, lc2 = self.link_com_pos_1, self.link_com_pos_2
        I1 = I2 = self.link_moi
        g = 9.8
        theta1, theta2, dtheta1, dtheta2 = s.T
        d1 = m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * np.cos(theta2)) + I1 + I2
        d2 = m2 * (lc2 ** 2 + l1 * lc2 * np.cos(theta2)) + I2
        phi2 = m2 * lc2 * g * np.cos(theta1 + theta2 - np.pi / 2.0)
        phi1 = (-m2 * l1 * lc2 * dtheta2 ** 2 * np.sin(theta2)
                - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * np.sin(theta2)
                + (m1 * lc1 + m2 * l1) * g * np.cos(theta1 - np.pi / 2) + phi2)
        ddtheta2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 ** 2 * np.sin(theta2) - phi2) / (
            m2 * lc2 ** 2 + I2 - d2 ** 2 / d1)
        ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
        return np.stack([dtheta1, dtheta2, ddtheta1, ddtheta2], axis=1)

    def _transition(self, actions):
        a = self.torques[actions]
        s, h = self.state, self.dt
        k1 = self._dsdt(s, a)
        k2 = self._dsdt(s + h / 2 * k1, a)
        k3 = self._dsdt(s + h / 2 * k2, a)
        k4 = self._dsdt(s + h * k3, a)
        ns = s + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ns[:, 0] = _wrap(ns[:, 0])
        ns[:, 1] = _wrap(ns[:, 1])
        ns[:, 2] = np.clip(ns[:, 2], -self.max_vel_1, self.max_vel_1)
        ns[:, 3] = np.clip(ns[:, 3], -self.max_vel_2, self.max_vel_2)
        self.state = ns
        self.t += 1
        terminated = -np.cos(ns[:, 0]) - np.cos(ns[:, 1] + ns[:, 0]) > 1.0
        truncated = self.t >= self.max_steps
        return np.where(terminated, 0.0, -1.0), terminated, truncated

    def _observe(self, idx):
        s = self.state[idx]
        return np.stack([np.cos(s[:, 0]), np.sin(s[:, 0]), np.cos(s[:, 1]), np.sin(s[:, 1]),
                         s[:, 2], s[:, 3]], axis=1)


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi
