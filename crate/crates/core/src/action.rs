use core::fmt;

use crate::sim::ThrustCommand;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// The three-way steering interface shared by the docking policy and the
/// learning agent. Discriminant order is the greedy tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DiscreteAction {
    GoStraight = 0,
    TurnLeft = 1,
    TurnRight = 2,
}

impl DiscreteAction {
    pub const ALL: [DiscreteAction; 3] = [DiscreteAction::GoStraight, DiscreteAction::TurnLeft, DiscreteAction::TurnRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<DiscreteAction> {
        DiscreteAction::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DiscreteAction::GoStraight => "go_straight",
            DiscreteAction::TurnLeft => "turn_left",
            DiscreteAction::TurnRight => "turn_right",
        }
    }
}

impl fmt::Display for DiscreteAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed thrust pair for each discrete action.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ActionThrusts {
    pub straight: ThrustCommand,
    pub left: ThrustCommand,
    pub right: ThrustCommand,
}

impl Default for ActionThrusts {
    fn default() -> Self {
        ActionThrusts {
            straight: ThrustCommand::new(0.5, 0.5),
            left: ThrustCommand::new(-0.2, 0.8),
            right: ThrustCommand::new(0.8, -0.2),
        }
    }
}

impl ActionThrusts {
    /// Equal `straight` thrust ahead; turns spin in place at `pivot`.
    pub fn pivoting(straight: f64, pivot: f64) -> Self {
        ActionThrusts {
            straight: ThrustCommand::new(straight, straight),
            left: ThrustCommand::new(-pivot, pivot),
            right: ThrustCommand::new(pivot, -pivot),
        }
    }

    pub fn command(&self, action: DiscreteAction) -> ThrustCommand {
        match action {
            DiscreteAction::GoStraight => self.straight,
            DiscreteAction::TurnLeft => self.left,
            DiscreteAction::TurnRight => self.right,
        }
    }
}
