// Joystick / keyboard to teleop command mapping.
//
// Heading convention: 0 deg points along the OW1 axis.  The default screen
// mapping places OW1 at screen-down, so full stick-forward (screen-up)
// commands heading 180 deg, stick-right commands 90 deg, and the up-right
// diagonal commands 135 deg.

export interface StickCommand {
  v: number;
  heading: number; // [rad), in [0, 2*pi)
  yawRate: number;
}

export function stickToCommand(
  sx: number,
  sy: number,
  yawSlider: number,
  vLimit: number,
  yawLimit: number,
): StickCommand {
  const mag = Math.min(1, Math.hypot(sx, sy));
  if (mag < 1e-12) {
    // Dead-man behaviour: zero deflection is an explicit zero command.
    return { v: 0, heading: 0, yawRate: yawSlider * yawLimit };
  }
  // Angle from screen-up, clockwise toward screen-right.
  const phi = Math.atan2(sx, -sy);
  let heading = Math.PI - phi;
  heading %= 2 * Math.PI;
  if (heading < 0) heading += 2 * Math.PI;
  return { v: mag * vLimit, heading, yawRate: yawSlider * yawLimit };
}

export interface KeyState {
  w: boolean;
  a: boolean;
  s: boolean;
  d: boolean;
  q: boolean;
  e: boolean;
}

export function emptyKeys(): KeyState {
  return { w: false, a: false, s: false, d: false, q: false, e: false };
}

// WASD acts as a virtual stick with identical semantics to the joystick;
// Q/E drive the yaw slider.
export function keysToStick(keys: KeyState): { sx: number; sy: number; yaw: number } {
  let sx = 0;
  let sy = 0;
  if (keys.w) sy -= 1;
  if (keys.s) sy += 1;
  if (keys.a) sx -= 1;
  if (keys.d) sx += 1;
  const mag = Math.hypot(sx, sy);
  if (mag > 1) {
    sx /= mag;
    sy /= mag;
  }
  let yaw = 0;
  if (keys.q) yaw += 1;
  if (keys.e) yaw -= 1;
  return { sx, sy, yaw };
}
