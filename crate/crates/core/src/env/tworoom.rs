//! Two disconnected 20x20 rooms with opposite goals.
//!
//! Room 0 starts top-left and terminates bottom-right; room 1 is mirrored.
//! `x` grows to the right and `y` grows downward. Actions: 0 up, 1 right,
//! 2 down, 3 left. Off-grid moves leave the agent in place.

pub const GRID_SIZE: usize = 20;
const MAX_COORD: i32 = GRID_SIZE as i32 - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TwoRoomState {
    pub x: i32,
    pub y: i32,
    pub room: u8,
}

impl TwoRoomState {
    pub fn start(room: u8) -> Self {
        match room {
            0 => Self { x: 0, y: 0, room },
            _ => Self { x: MAX_COORD, y: MAX_COORD, room: 1 },
        }
    }

    pub fn goal(room: u8) -> (i32, i32) {
        match room {
            0 => (MAX_COORD, MAX_COORD),
            _ => (0, 0),
        }
    }

    /// `(x / 19, y / 19, room)`; the room coordinate disambiguates rooms.
    pub fn observation(&self) -> [f64; 3] {
        let scale = MAX_COORD as f64;
        [self.x as f64 / scale, self.y as f64 / scale, f64::from(self.room)]
    }

    pub fn from_observation(obs: &[f64]) -> Option<Self> {
        if obs.len() != 3 {
            return None;
        }
        let scale = MAX_COORD as f64;
        let x = (obs[0] * scale).round() as i32;
        let y = (obs[1] * scale).round() as i32;
        let room = obs[2].round();
        let valid = (0..=MAX_COORD).contains(&x) && (0..=MAX_COORD).contains(&y) && (room == 0.0 || room == 1.0);
        valid.then_some(Self { x, y, room: room as u8 })
    }

    pub fn is_goal(&self) -> bool {
        (self.x, self.y) == Self::goal(self.room)
    }

    /// Reward -1 per step; terminal on entering the goal cell.
    pub fn step(&self, action: usize) -> (Self, f64, bool) {
        let (dx, dy) = match action {
            0 => (0, -1),
            1 => (1, 0),
            2 => (0, 1),
            _ => (-1, 0),
        };
        let next = Self {
            x: (self.x + dx).clamp(0, MAX_COORD),
            y: (self.y + dy).clamp(0, MAX_COORD),
            room: self.room,
        };
        (next, -1.0, next.is_goal())
    }
}
