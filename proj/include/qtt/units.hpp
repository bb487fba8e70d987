#pragma once

// Unit conventions.
//
// Internal units: hbar = 1, 2m = 1, lengths in Angstrom.  The TDSE then
// reads i d(psi)/dt = (-d^2/dx^2 + U) psi with U = V[eV] / K, where
// K = hbar^2/(2 m_e) in eV*A^2.  Energies map as E_int = E_eV / K = k^2,
// the group velocity of a packet with mean wavenumber k0 is 2*k0, and one
// internal time unit equals hbar/K seconds.

namespace qtt::units {

// CODATA 2018 exact/recommended values.
inline constexpr double hbar_J_s = 1.054571817e-34;
inline constexpr double electron_mass_kg = 9.1093837015e-31;
inline constexpr double elementary_charge_C = 1.602176634e-19;

// hbar^2 / (2 m_e) in eV*A^2  (~3.80998).
inline constexpr double kinetic_constant_eV_A2 =
    hbar_J_s * hbar_J_s / (2.0 * electron_mass_kg * elementary_charge_C) * 1e20;

inline constexpr double hbar_eV_fs = hbar_J_s / elementary_charge_C * 1e15;

// One internal time unit in femtoseconds (~0.17276 fs).
inline constexpr double fs_per_internal_time = hbar_eV_fs / kinetic_constant_eV_A2;

inline constexpr double energy_to_internal(double e_eV) { return e_eV / kinetic_constant_eV_A2; }
inline constexpr double energy_to_eV(double e_int) { return e_int * kinetic_constant_eV_A2; }
inline constexpr double time_to_fs(double t_int) { return t_int * fs_per_internal_time; }
inline constexpr double time_to_internal(double t_fs) { return t_fs / fs_per_internal_time; }

}  // namespace qtt::units
