use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

/// Adjacent binary32 value in `direction`, stepping the bit pattern.
///
/// Zero of either sign steps to the smallest subnormal of the matching
/// direction. Stepping past the largest finite magnitude is a range error.
pub fn next_representable(x: f32, direction: Direction) -> Result<f32> {
    if !x.is_finite() {
        return Err(Error::Range { value: x });
    }
    let bits = x.to_bits();
    let next = if x == 0.0 {
        match direction {
            Direction::Up => f32::from_bits(1),
            Direction::Down => f32::from_bits(0x8000_0001),
        }
    } else {
        // Moving away from zero increments the magnitude bits.
        let away = (x > 0.0) == (direction == Direction::Up);
        f32::from_bits(if away { bits + 1 } else { bits - 1 })
    };
    if next.is_infinite() {
        return Err(Error::Range { value: x });
    }
    Ok(next)
}

/// Number of representable steps between two finite values of equal sign,
/// treating +0 and -0 as one point.
pub fn ulp_distance(a: f32, b: f32) -> u64 {
    fn ordered(x: f32) -> i64 {
        let bits = x.to_bits() as i64;
        if bits & 0x8000_0000 != 0 {
            -(bits & 0x7fff_ffff)
        } else {
            bits
        }
    }
    (ordered(a) - ordered(b)).unsigned_abs()
}
