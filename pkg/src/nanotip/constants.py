"""Physical constants and unit helpers (SI internally, eV at analysis boundaries)."""
from scipy.constants import (
    c as C_LIGHT,
    e as E_CHARGE,          # elementary charge, |e| > 0
    electron_mass as M_E,
    epsilon_0 as EPS0,
    h as H_PLANCK,
    hbar as HBAR,
    pi as PI,
)

EV = E_CHARGE            # 1 eV in joules
NM = 1e-9
FS = 1e-15


def to_ev(energy_j):
    """Joules -> electronvolts."""
    return energy_j / EV


def to_joule(energy_ev):
    """Electronvolts -> joules."""
    return energy_ev * EV
