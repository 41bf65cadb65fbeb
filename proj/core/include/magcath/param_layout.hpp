#pragma once

namespace magcath {

// Column layout of the analytically propagated sensitivity blocks. Order of
// enabled blocks: coil currents (3 per actuator), initial curvature u0,
// base position p0, tip force f_tip. Insertion length is differenced
// separately and never appears here.
struct ParamLayout {
  int n_actuators = 0;
  bool currents = true;
  bool u0 = true;
  bool p0 = false;
  bool f_tip = false;

  int size() const {
    return 3 * (n_actuators * (currents ? 1 : 0) + (u0 ? 1 : 0) +
                (p0 ? 1 : 0) + (f_tip ? 1 : 0));
  }
  // Start column of actuator k's current block, -1 when disabled.
  int currents_offset(int k) const { return currents ? 3 * k : -1; }
  int u0_offset() const {
    return u0 ? 3 * (currents ? n_actuators : 0) : -1;
  }
  int p0_offset() const {
    if (!p0) return -1;
    return 3 * ((currents ? n_actuators : 0) + (u0 ? 1 : 0));
  }
  int f_tip_offset() const {
    if (!f_tip) return -1;
    return 3 * ((currents ? n_actuators : 0) + (u0 ? 1 : 0) + (p0 ? 1 : 0));
  }
};

}  // namespace magcath
