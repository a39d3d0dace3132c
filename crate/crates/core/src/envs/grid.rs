//! Walled grid room with coloured objects and a forward view cone.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{EnvError, Predicate};
use crate::rng::{self, Rng};

pub const VIEW_DEPTH: i32 = 6;
pub const VIEW_HALF_WIDTH: i32 = 3;

pub const BARRIER: &str = "There is a barrier in front of you, you can't move forward.";
pub const UNKNOWN_ACTION: &str = "Unknown action.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    North,
    East,
    South,
    West,
}

impl Facing {
    const ORDER: [Facing; 4] = [Facing::North, Facing::East, Facing::South, Facing::West];

    fn vector(self) -> (i32, i32) {
        match self {
            Facing::North => (0, -1),
            Facing::East => (1, 0),
            Facing::South => (0, 1),
            Facing::West => (-1, 0),
        }
    }

    fn index(self) -> usize {
        Self::ORDER.iter().position(|f| *f == self).unwrap()
    }

    pub fn right(self) -> Facing {
        Self::ORDER[(self.index() + 1) % 4]
    }

    pub fn left(self) -> Facing {
        Self::ORDER[(self.index() + 3) % 4]
    }

    fn from_vector(v: (i32, i32)) -> Facing {
        *Self::ORDER.iter().find(|f| f.vector() == v).expect("unit vector")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentPlacement {
    pub x: i32,
    pub y: i32,
    pub facing: Facing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectPlacement {
    pub kind: String,
    pub color: String,
    /// Position; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<(i32, i32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_side")]
    pub width: i32,
    #[serde(default = "default_side")]
    pub height: i32,
    /// Interior wall cells in addition to the border.
    #[serde(default)]
    pub walls: Vec<(i32, i32)>,
    /// Start pose; drawn from the seed when absent.
    #[serde(default)]
    pub agent: Option<AgentPlacement>,
    pub objects: Vec<ObjectPlacement>,
}

fn default_side() -> i32 {
    8
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridObject {
    pub kind: String,
    pub color: String,
    /// 1-based index among objects sharing colour and kind.
    pub number: u32,
    pub pos: (i32, i32),
}

impl GridObject {
    pub fn name(&self) -> String {
        format!("{} {} {}", self.color, self.kind, self.number)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridNav {
    pub width: i32,
    pub height: i32,
    walls: Vec<(i32, i32)>,
    pub agent: (i32, i32),
    pub facing: Facing,
    pub objects: Vec<GridObject>,
    pub carrying: Option<GridObject>,
}

impl GridNav {
    pub fn new(cfg: &GridConfig, seed: u64) -> Result<Self, EnvError> {
        if cfg.width < 3 || cfg.height < 3 {
            return Err(EnvError::Invalid("grid must be at least 3x3".into()));
        }
        let mut g = GridNav {
            width: cfg.width,
            height: cfg.height,
            walls: cfg.walls.clone(),
            agent: (-1, -1),
            facing: Facing::North,
            objects: Vec::new(),
            carrying: None,
        };
        let mut rng = rng::seeded(seed);
        if let Some(pos) = cfg.walls.iter().find(|p| !g.interior(**p)) {
            return Err(EnvError::Invalid(format!("wall at {pos:?} is outside the room")));
        }
        if let Some(a) = &cfg.agent {
            g.agent = (a.x, a.y);
            g.facing = a.facing;
        }
        for o in &cfg.objects {
            let number = 1 + g.objects.iter().filter(|p| p.kind == o.kind && p.color == o.color).count() as u32;
            let pos = match o.at {
                Some(p) => {
                    if !g.is_free(p) || p == g.agent {
                        return Err(EnvError::Invalid(format!("object position {p:?} is not a free cell")));
                    }
                    p
                }
                None => g.random_free_cell(&mut rng)?,
            };
            g.objects.push(GridObject {
                kind: o.kind.clone(),
                color: o.color.clone(),
                number,
                pos,
            });
        }
        if cfg.agent.is_some() {
            if !g.is_free(g.agent) {
                return Err(EnvError::Invalid(format!("agent start {:?} is not a free cell", g.agent)));
            }
        } else {
            g.agent = g.random_free_cell(&mut rng)?;
            g.facing = Facing::ORDER[rng::below(&mut rng, 4) as usize];
        }
        Ok(g)
    }

    fn interior(&self, (x, y): (i32, i32)) -> bool {
        x > 0 && y > 0 && x < self.width - 1 && y < self.height - 1
    }

    fn is_wall(&self, p: (i32, i32)) -> bool {
        !self.interior(p) || self.walls.contains(&p)
    }

    fn object_at(&self, p: (i32, i32)) -> Option<&GridObject> {
        self.objects.iter().find(|o| o.pos == p)
    }

    fn is_free(&self, p: (i32, i32)) -> bool {
        !self.is_wall(p) && self.object_at(p).is_none()
    }

    fn random_free_cell(&self, rng: &mut Rng) -> Result<(i32, i32), EnvError> {
        let free: Vec<(i32, i32)> = (1..self.height - 1)
            .flat_map(|y| (1..self.width - 1).map(move |x| (x, y)))
            .filter(|p| self.is_free(*p) && *p != self.agent)
            .collect();
        if free.is_empty() {
            return Err(EnvError::Invalid("no free cell left for placement".into()));
        }
        Ok(free[rng::below(rng, free.len() as u64) as usize])
    }

    fn front(&self) -> (i32, i32) {
        let (dx, dy) = self.facing.vector();
        (self.agent.0 + dx, self.agent.1 + dy)
    }

    /// (forward, left) offsets of a cell relative to the agent's pose.
    fn relative(&self, p: (i32, i32)) -> (i32, i32) {
        let (fx, fy) = self.facing.vector();
        let (lx, ly) = self.facing.left().vector();
        let (dx, dy) = (p.0 - self.agent.0, p.1 - self.agent.1);
        (dx * fx + dy * fy, dx * lx + dy * ly)
    }

    pub fn visible(&self) -> Vec<(&GridObject, i32, i32)> {
        self.objects
            .iter()
            .filter_map(|o| {
                let (f, l) = self.relative(o.pos);
                let inside = (0..=VIEW_DEPTH).contains(&f) && l.abs() <= VIEW_HALF_WIDTH && (f, l) != (0, 0);
                inside.then_some((o, f, l))
            })
            .collect()
    }

    fn wall_distance(&self) -> i32 {
        let (dx, dy) = self.facing.vector();
        let mut k = 1;
        while !self.is_wall((self.agent.0 + dx * k, self.agent.1 + dy * k)) {
            k += 1;
        }
        k
    }

    pub fn render(&self) -> String {
        let mut out = String::from("In front of you in this room, you can see several objects: ");
        for (o, f, l) in self.visible() {
            if l == 0 {
                out.push_str(&format!("There is a {} right in front of you {f} steps away. ", o.name()));
            } else {
                let side = if l > 0 { "left" } else { "right" };
                out.push_str(&format!(
                    "There is a {} {f} steps in front of you and {} steps to your {side}. ",
                    o.name(),
                    l.abs()
                ));
            }
        }
        out.push_str(&format!(
            "The room has walls around you. You are facing a wall {} steps away. ",
            self.wall_distance()
        ));
        match &self.carrying {
            Some(o) => out.push_str(&format!("You are carrying a {}.", o.name())),
            None => out.push_str("You are not carrying anything."),
        }
        out
    }

    pub fn valid_actions(&self) -> Vec<String> {
        let mut out: Vec<String> = ["turn left", "turn right", "move forward", "pick up", "drop"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        out.extend(self.visible().into_iter().map(|(o, _, _)| format!("go to {}", o.name())));
        out
    }

    /// Applies an action already known to be in `valid_actions`.
    pub fn apply(&mut self, action: &str) -> String {
        match action {
            "turn left" => {
                self.facing = self.facing.left();
                self.render()
            }
            "turn right" => {
                self.facing = self.facing.right();
                self.render()
            }
            "move forward" => {
                let next = self.front();
                if !self.is_free(next) {
                    return BARRIER.to_string();
                }
                self.agent = next;
                self.render()
            }
            "pick up" => {
                if self.carrying.is_some() {
                    return "You are already carrying something.".into();
                }
                let front = self.front();
                match self.objects.iter().position(|o| o.pos == front) {
                    Some(i) => {
                        self.carrying = Some(self.objects.remove(i));
                        self.render()
                    }
                    None => "There is nothing in front of you to pick up.".into(),
                }
            }
            "drop" => {
                let front = self.front();
                if self.carrying.is_none() || !self.is_free(front) {
                    return "You can't drop anything here.".into();
                }
                let mut o = self.carrying.take().unwrap();
                o.pos = front;
                self.objects.push(o);
                self.render()
            }
            other => match other.strip_prefix("go to ") {
                Some(name) => self.go_to(name),
                None => UNKNOWN_ACTION.into(),
            },
        }
    }

    fn go_to(&mut self, name: &str) -> String {
        let Some(target) = self.objects.iter().find(|o| o.name() == name).map(|o| o.pos) else {
            return UNKNOWN_ACTION.into();
        };
        let dist = self.distances_from(self.agent);
        let best = Facing::ORDER
            .iter()
            .map(|f| {
                let (dx, dy) = f.vector();
                (target.0 + dx, target.1 + dy)
            })
            .filter_map(|c| dist(c).map(|d| (d, c)))
            .min_by_key(|(d, _)| *d);
        match best {
            Some((_, cell)) => {
                self.agent = cell;
                self.facing = Facing::from_vector((target.0 - cell.0, target.1 - cell.1));
                self.render()
            }
            None => format!("You can't reach the {name}."),
        }
    }

    /// BFS over free cells; returns a lookup of step counts.
    fn distances_from(&self, start: (i32, i32)) -> impl Fn((i32, i32)) -> Option<u32> {
        let w = self.width;
        let mut dist = vec![None; (self.width * self.height) as usize];
        let idx = move |(x, y): (i32, i32)| (y * w + x) as usize;
        dist[idx(start)] = Some(0u32);
        let mut queue = VecDeque::from([start]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[idx(cur)].unwrap();
            for f in Facing::ORDER {
                let (dx, dy) = f.vector();
                let next = (cur.0 + dx, cur.1 + dy);
                if self.is_free(next) && dist[idx(next)].is_none() {
                    dist[idx(next)] = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
        let (w, h) = (self.width, self.height);
        move |p: (i32, i32)| {
            if p.0 < 0 || p.1 < 0 || p.0 >= w || p.1 >= h {
                None
            } else {
                dist[idx(p)]
            }
        }
    }

    pub fn holds(&self, p: &Predicate) -> Option<bool> {
        Some(match p {
            Predicate::Seen(name) => self.visible().iter().any(|(o, _, _)| o.name() == *name),
            Predicate::NextTo(name) => self.object_at(self.front()).is_some_and(|o| o.name() == *name),
            Predicate::Holding(name) => self.carrying.as_ref().is_some_and(|o| o.name() == *name),
            Predicate::AtCell(cell) => self.agent == *cell,
            _ => return None,
        })
    }
}
