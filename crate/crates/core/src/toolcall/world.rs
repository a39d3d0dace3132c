//! Deterministic mock backing store for executable tools.
//!
//! Three stateful families (vehicle, watchlist, filesystem) plus a handful
//! of pure functions. Tools that are declared in a suite but have no
//! implementation here are executed as signature checks only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::grammar::render_call;
use super::validate::validate_call;
use crate::rng::fnv1a;
use crate::model::{ExecutionResult, Outcome, ToolCall, ToolSpec, Value};

pub const LITERS_PER_GALLON: f64 = 3.785411784;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vehicle {
    #[serde(default)]
    pub fuel_level: f64,
    #[serde(default = "default_capacity")]
    pub fuel_capacity: f64,
    /// door name -> locked
    #[serde(default = "default_doors")]
    pub doors: BTreeMap<String, bool>,
    #[serde(default = "released")]
    pub parking_brake: String,
    #[serde(default = "off")]
    pub headlights: String,
}

fn default_capacity() -> f64 {
    50.0
}

fn default_doors() -> BTreeMap<String, bool> {
    ["driver", "passenger", "rear_left", "rear_right"]
        .into_iter()
        .map(|d| (d.to_string(), false))
        .collect()
}

fn released() -> String {
    "released".into()
}

fn off() -> String {
    "off".into()
}

impl Default for Vehicle {
    fn default() -> Self {
        Self {
            fuel_level: 0.0,
            fuel_capacity: default_capacity(),
            doors: default_doors(),
            parking_brake: released(),
            headlights: off(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FsNode {
    File(String),
    Dir(BTreeMap<String, FsNode>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSystem {
    /// Path components from the root to the working directory.
    #[serde(default)]
    pub cwd: Vec<String>,
    #[serde(default)]
    pub root: BTreeMap<String, FsNode>,
}

impl FileSystem {
    fn dir_mut(&mut self) -> Option<&mut BTreeMap<String, FsNode>> {
        let mut cur = &mut self.root;
        for part in &self.cwd {
            match cur.get_mut(part) {
                Some(FsNode::Dir(d)) => cur = d,
                _ => return None,
            }
        }
        Some(cur)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockWorld {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<Vehicle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watchlist: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filesystem: Option<FileSystem>,
}

/// Whether a tool changes world state when it succeeds.
pub fn is_mutating(function: &str) -> bool {
    matches!(
        function,
        "fillFuelTank"
            | "lockDoors"
            | "activateParkingBrake"
            | "setHeadlights"
            | "add_to_watchlist"
            | "remove_stock_from_watchlist"
            | "cd"
            | "mkdir"
            | "touch"
    )
}

type ToolResult = Result<serde_json::Value, String>;

fn arg_f64(call: &ToolCall, name: &str) -> Result<f64, String> {
    call.arguments
        .get(name)
        .and_then(Value::as_f64)
        .ok_or_else(|| format!("argument {name} must be a number"))
}

fn arg_str<'a>(call: &'a ToolCall, name: &str) -> Result<&'a str, String> {
    call.arguments
        .get(name)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("argument {name} must be a string"))
}

fn opt_i64(call: &ToolCall, name: &str) -> Option<i64> {
    match call.arguments.get(name) {
        Some(Value::Int(i)) => Some(*i),
        _ => None,
    }
}

fn usd_rate(code: &str) -> Option<f64> {
    Some(match code.to_ascii_uppercase().as_str() {
        "USD" => 1.0,
        "EUR" => 0.92,
        "CAD" => 1.36,
        "GBP" => 0.79,
        "JPY" => 150.0,
        "AUD" => 1.52,
        "CNY" => 7.2,
        _ => return None,
    })
}

fn round_to(x: f64, digits: i64) -> f64 {
    let p = 10f64.powi(digits.clamp(0, 12) as i32);
    (x * p).round() / p
}

impl MockWorld {
    fn vehicle(&mut self) -> &mut Vehicle {
        self.vehicle.get_or_insert_with(Vehicle::default)
    }

    fn fs(&mut self) -> &mut FileSystem {
        self.filesystem.get_or_insert_with(FileSystem::default)
    }

    fn watchlist(&mut self) -> &mut Vec<String> {
        self.watchlist.get_or_insert_with(Vec::new)
    }

    /// Runs a natively implemented tool. `None` means no implementation.
    fn dispatch(&mut self, call: &ToolCall) -> Option<ToolResult> {
        let r = match call.function.as_str() {
            "fillFuelTank" => self.fill_fuel_tank(call),
            "lockDoors" => self.lock_doors(call),
            "activateParkingBrake" => self.parking_brake(call),
            "setHeadlights" => self.headlights(call),
            "add_to_watchlist" => self.add_to_watchlist(call),
            "remove_stock_from_watchlist" => self.remove_from_watchlist(call),
            "get_watchlist" => Ok(json!({"watchlist": self.watchlist().clone()})),
            "cd" => self.cd(call),
            "ls" => self.ls(),
            "pwd" => Ok(json!({"current_working_directory": format!("/{}", self.fs().cwd.join("/"))})),
            "mkdir" => self.create(call, "dir_name", FsNode::Dir(BTreeMap::new())),
            "touch" => self.create(call, "file_name", FsNode::File(String::new())),
            "cat" => self.cat(call),
            "gallon_to_liter" => arg_f64(call, "gallon").map(|g| json!({"liter": g * LITERS_PER_GALLON})),
            "liter_to_gallon" => arg_f64(call, "liter").map(|l| json!({"gallon": l / LITERS_PER_GALLON})),
            "currency_conversion.convert" => convert(call),
            "geometry.area_circle" => arg_f64(call, "radius").map(|r| json!({"area": std::f64::consts::PI * r * r})),
            "logarithm" => logarithm(call),
            "get_zipcode_based_on_city" => arg_str(call, "city").map(|c| json!({"zipcode": zipcode(c)})),
            "estimate_distance" => estimate_distance(call),
            "estimate_drive_feasibility_by_mileage" => {
                arg_f64(call, "distance").map(|d| json!({"canDrive": d <= 500.0}))
            }
            _ => return None,
        };
        Some(r)
    }

    fn fill_fuel_tank(&mut self, call: &ToolCall) -> ToolResult {
        let amount = arg_f64(call, "fuelAmount")?;
        if amount < 0.0 {
            return Err("fuelAmount must be non-negative".into());
        }
        let v = self.vehicle();
        if v.fuel_level + amount > v.fuel_capacity {
            return Err(format!(
                "Fuel tank capacity exceeded: level {} + {} > {}",
                v.fuel_level, amount, v.fuel_capacity
            ));
        }
        v.fuel_level += amount;
        Ok(json!({"fuelLevel": v.fuel_level}))
    }

    fn lock_doors(&mut self, call: &ToolCall) -> ToolResult {
        let unlock = call
            .arguments
            .get("unlock")
            .and_then(Value::as_bool)
            .ok_or("argument unlock must be a boolean")?;
        let doors = call
            .arguments
            .get("door")
            .and_then(Value::as_list)
            .ok_or("argument door must be a list")?;
        let names: Vec<&str> = doors.iter().map(|d| d.as_str().ok_or("door names must be strings")).collect::<Result<_, _>>()?;
        let v = self.vehicle();
        if let Some(bad) = names.iter().find(|n| !v.doors.contains_key(**n)) {
            return Err(format!("unknown door {bad}"));
        }
        for n in names {
            v.doors.insert(n.to_string(), !unlock);
        }
        let unlocked = v.doors.values().filter(|locked| !**locked).count();
        Ok(json!({
            "lockStatus": if unlock { "unlocked" } else { "locked" },
            "remainingUnlockedDoors": unlocked
        }))
    }

    fn parking_brake(&mut self, call: &ToolCall) -> ToolResult {
        let state = match arg_str(call, "mode")? {
            "engage" => "engaged",
            "release" => "released",
            other => return Err(format!("invalid mode {other}")),
        };
        self.vehicle().parking_brake = state.to_string();
        Ok(json!({"parkingBrakeStatus": state}))
    }

    fn headlights(&mut self, call: &ToolCall) -> ToolResult {
        let mode = arg_str(call, "mode")?;
        if mode != "on" && mode != "off" {
            return Err(format!("invalid mode {mode}"));
        }
        self.vehicle().headlights = mode.to_string();
        Ok(json!({"headlightStatus": mode}))
    }

    fn add_to_watchlist(&mut self, call: &ToolCall) -> ToolResult {
        let stock = arg_str(call, "stock")?.to_string();
        let list = self.watchlist();
        if !list.contains(&stock) {
            list.push(stock);
        }
        Ok(json!({"watchlist": list.clone()}))
    }

    fn remove_from_watchlist(&mut self, call: &ToolCall) -> ToolResult {
        let symbol = arg_str(call, "symbol")?;
        let list = self.watchlist();
        let before = list.len();
        list.retain(|s| s != symbol);
        if list.len() == before {
            return Err(format!("{symbol} is not on the watchlist"));
        }
        Ok(json!({"status": format!("Stock {symbol} removed from watchlist")}))
    }

    fn cd(&mut self, call: &ToolCall) -> ToolResult {
        let folder = arg_str(call, "folder")?;
        let fs = self.fs();
        if folder == ".." {
            if fs.cwd.pop().is_none() {
                return Err("already at root".into());
            }
        } else {
            match fs.dir_mut().and_then(|d| d.get(folder)) {
                Some(FsNode::Dir(_)) => fs.cwd.push(folder.to_string()),
                _ => return Err(format!("no such directory: {folder}")),
            }
        }
        Ok(json!({"current_working_directory": fs.cwd.last().cloned().unwrap_or_else(|| "/".into())}))
    }

    fn ls(&mut self) -> ToolResult {
        let dir = self.fs().dir_mut().ok_or("working directory vanished")?;
        Ok(json!({"current_directory_content": dir.keys().cloned().collect::<Vec<_>>()}))
    }

    fn create(&mut self, call: &ToolCall, arg: &str, node: FsNode) -> ToolResult {
        let name = arg_str(call, arg)?.to_string();
        if name.is_empty() || name.contains('/') {
            return Err(format!("invalid name {name:?}"));
        }
        let dir = self.fs().dir_mut().ok_or("working directory vanished")?;
        if dir.contains_key(&name) {
            return Err(format!("{name} already exists"));
        }
        dir.insert(name, node);
        Ok(json!({"status": "created"}))
    }

    fn cat(&mut self, call: &ToolCall) -> ToolResult {
        let name = arg_str(call, "file_name")?;
        match self.fs().dir_mut().and_then(|d| d.get(name)) {
            Some(FsNode::File(content)) => Ok(json!({"file_content": content})),
            _ => Err(format!("no such file: {name}")),
        }
    }
}

fn convert(call: &ToolCall) -> ToolResult {
    let amount = arg_f64(call, "amount")?;
    let from = arg_str(call, "from_currency")?;
    let to = arg_str(call, "to_currency")?;
    let (Some(rf), Some(rt)) = (usd_rate(from), usd_rate(to)) else {
        return Err(format!("unsupported currency pair {from}/{to}"));
    };
    Ok(json!({"converted_amount": round_to(amount / rf * rt, 2), "currency": to.to_ascii_uppercase()}))
}

fn logarithm(call: &ToolCall) -> ToolResult {
    let value = arg_f64(call, "value")?;
    let base = arg_f64(call, "base")?;
    if value <= 0.0 || base <= 0.0 || base == 1.0 {
        return Err("logarithm undefined for these arguments".into());
    }
    let precision = opt_i64(call, "precision").unwrap_or(6);
    Ok(json!({"result": round_to(value.ln() / base.ln(), precision)}))
}

fn zipcode(city: &str) -> String {
    match city {
        "Crescent Hollow" => "69238".into(),
        "Autumnville" => "51479".into(),
        _ => format!("{:05}", fnv1a(city.as_bytes()) % 100_000),
    }
}

fn estimate_distance(call: &ToolCall) -> ToolResult {
    let a = arg_str(call, "cityA")?;
    let b = arg_str(call, "cityB")?;
    let mut pair = [a, b];
    pair.sort();
    let distance = match pair {
        ["51479", "69238"] => 630.0,
        _ => (fnv1a(pair.join("|").as_bytes()) % 2000) as f64 + 10.0,
    };
    Ok(json!({"distance": distance}))
}

/// Executes calls in order against `world`. Each call is validated first;
/// invalid or failing calls yield error results and never abort the batch.
pub fn execute_calls(calls: &[ToolCall], tools: &[ToolSpec], world: &mut MockWorld) -> Vec<ExecutionResult> {
    calls
        .iter()
        .map(|call| {
            if !tools.iter().any(|t| t.name == call.function) {
                return ExecutionResult::error(call.clone(), format!("no such tool: {}", call.function));
            }
            let verdict = validate_call(call, tools);
            if !verdict.is_ok() {
                return ExecutionResult::error(call.clone(), verdict.to_log());
            }
            // failing tools must not leave partial state behind
            let mut scratch = world.clone();
            match scratch.dispatch(call) {
                Some(Ok(payload)) => {
                    *world = scratch;
                    ExecutionResult::ok(call.clone(), payload.to_string())
                }
                Some(Err(msg)) => ExecutionResult::error(call.clone(), msg),
                None => ExecutionResult::ok(call.clone(), json!({"status": "success"}).to_string()),
            }
        })
        .collect()
}

/// Renders execution results the way they are fed back to the agent.
pub fn render_results(results: &[ExecutionResult]) -> String {
    results
        .iter()
        .map(|r| {
            let tag = match r.outcome {
                Outcome::Ok => "ok",
                Outcome::Error => "error",
            };
            format!("{} -> {tag}: {}", render_call(&r.call), r.payload)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A turn passes when the agent's world equals the golden world and every
/// golden non-mutating call was executed successfully (order-insensitive,
/// argument-equal, multiset).
pub fn judge_turn(
    executed_world: &MockWorld,
    golden_world: &MockWorld,
    executed: &[ExecutionResult],
    golden_calls: &[ToolCall],
) -> bool {
    if executed_world != golden_world {
        return false;
    }
    let mut pool: Vec<&ToolCall> = executed
        .iter()
        .filter(|r| r.outcome == Outcome::Ok)
        .map(|r| &r.call)
        .collect();
    for golden in golden_calls.iter().filter(|c| !is_mutating(&c.function)) {
        match pool.iter().position(|c| *c == golden) {
            Some(i) => {
                pool.swap_remove(i);
            }
            None => return false,
        }
    }
    true
}
