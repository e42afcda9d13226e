use std::collections::BTreeMap;

use candle_core::{backprop::GradStore, Tensor};

use super::TrainPlan;
use crate::error::{OsdaError, Result};
use crate::model::{ModelState, ParamMap};
use crate::ops::{self, device};

/// Parameter groups, keyed by the first segment of a parameter name.
pub const GROUPS: [&str; 3] = ["extractor", "closed_head", "open_head"];

/// `lr = base · (1 + gamma · min(1, t / max_iter))^(-power)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvSchedule {
    pub gamma: f64,
    pub power: f64,
    pub max_iter: usize,
}

impl InvSchedule {
    pub fn factor(&self, t: usize) -> f64 {
        let progress = if self.max_iter == 0 {
            0.0
        } else {
            (t as f64 / self.max_iter as f64).min(1.0)
        };
        (1.0 + self.gamma * progress).powf(-self.power)
    }
}

#[derive(Debug, Clone)]
struct Group {
    name: &'static str,
    base_lr: f64,
    frozen: bool,
}

/// SGD with momentum, optional Nesterov correction and L2 weight decay
/// added to the gradient.
#[derive(Debug)]
pub struct Sgd {
    groups: Vec<Group>,
    /// Group index of every model variable, in `ModelState::vars` order.
    assignment: Vec<usize>,
    names: Vec<String>,
    buffers: Vec<Option<Tensor>>,
    momentum: f64,
    weight_decay: f64,
    nesterov: bool,
    schedule: InvSchedule,
    steps: usize,
}

fn group_of(name: &str) -> Result<usize> {
    let head = name.split('.').next().unwrap_or_default();
    GROUPS
        .iter()
        .position(|g| *g == head)
        .ok_or_else(|| OsdaError::invalid(format!("parameter `{name}` belongs to no known group")))
}

/// Learning rates: a pretrained extractor gets `lr_pretrained`, everything
/// newly instantiated gets `lr_new`; `plan.group_lr` overrides either.
pub fn make_optimizer(state: &ModelState, plan: &TrainPlan) -> Result<Sgd> {
    if state.is_frozen() {
        return Err(OsdaError::invalid("cannot optimize a frozen snapshot"));
    }
    for g in plan.group_lr.keys() {
        if !GROUPS.contains(&g.as_str()) {
            return Err(OsdaError::invalid(format!(
                "unknown parameter group `{g}` (expected one of {})",
                GROUPS.join(", ")
            )));
        }
    }
    let groups = GROUPS
        .iter()
        .map(|&name| {
            let default = if name == "extractor" && state.config().pretrained_extractor {
                plan.lr_pretrained
            } else {
                plan.lr_new
            };
            Group {
                name,
                base_lr: plan.group_lr.get(name).copied().unwrap_or(default),
                frozen: false,
            }
        })
        .collect();
    let assignment = state.vars().iter().map(|(n, _)| group_of(n)).collect::<Result<Vec<_>>>()?;
    Ok(Sgd {
        groups,
        assignment,
        names: state.vars().iter().map(|(n, _)| n.clone()).collect(),
        buffers: vec![None; state.vars().len()],
        momentum: plan.momentum,
        weight_decay: plan.weight_decay,
        nesterov: plan.nesterov,
        schedule: InvSchedule {
            gamma: plan.lr_gamma,
            power: plan.lr_power,
            max_iter: plan.pretrain_iters + plan.finetune_iters,
        },
        steps: 0,
    })
}

impl Sgd {
    pub fn base_lr(&self, group: &str) -> Option<f64> {
        self.groups.iter().find(|g| g.name == group).map(|g| g.base_lr)
    }

    /// Scheduled learning rate of `group` at global iteration `t`.
    pub fn lr_at(&self, group: &str, t: usize) -> Option<f64> {
        self.base_lr(group).map(|lr| lr * self.schedule.factor(t))
    }

    /// Stop updating a group (its parameters still receive gradients).
    pub fn freeze_group(&mut self, group: &str, frozen: bool) -> Result<()> {
        let g = self
            .groups
            .iter_mut()
            .find(|g| g.name == group)
            .ok_or_else(|| OsdaError::invalid(format!("unknown parameter group `{group}`")))?;
        g.frozen = frozen;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One update at global iteration `t`.
    pub fn step(&mut self, state: &ModelState, grads: &GradStore, t: usize) -> Result<()> {
        let factor = self.schedule.factor(t);
        for (i, (_, var)) in state.vars().iter().enumerate() {
            let group = &self.groups[self.assignment[i]];
            if group.frozen {
                continue;
            }
            let p = var.as_tensor().detach();
            let mut g = match grads.get(var.as_tensor()) {
                Some(g) => g.detach(),
                None => p.zeros_like()?,
            };
            if self.weight_decay != 0.0 {
                g = (g + (&p * self.weight_decay)?)?;
            }
            let d = if self.momentum != 0.0 {
                let buf = match &self.buffers[i] {
                    Some(b) => ((b * self.momentum)? + &g)?,
                    None => g.clone(),
                };
                let d = if self.nesterov {
                    (&g + (&buf * self.momentum)?)?
                } else {
                    buf.clone()
                };
                self.buffers[i] = Some(buf);
                d
            } else {
                g
            };
            var.set(&(p - (d * (group.base_lr * factor))?)?)?;
        }
        self.steps += 1;
        Ok(())
    }

    /// Momentum buffers and step count, for checkpoints.
    pub fn state(&self) -> Result<ParamMap> {
        let mut m = ParamMap::new();
        for (name, buf) in self.names.iter().zip(&self.buffers) {
            if let Some(b) = buf {
                m.insert(format!("momentum.{name}"), (b.dims().to_vec(), ops::flat(b)?));
            }
        }
        m.insert("steps".into(), (vec![1], vec![self.steps as f64]));
        Ok(m)
    }

    pub fn load_state(&mut self, aux: &ParamMap) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (i, name) in self.names.iter().enumerate() {
            if let Some((shape, data)) = aux.get(&format!("momentum.{name}")) {
                self.buffers[i] = Some(Tensor::from_vec(data.clone(), shape.as_slice(), &device())?);
                seen.insert(name.clone(), ());
            } else {
                self.buffers[i] = None;
            }
        }
        for k in aux.keys() {
            if let Some(rest) = k.strip_prefix("momentum.") {
                if !seen.contains_key(rest) {
                    return Err(OsdaError::Checkpoint(format!("momentum for unknown parameter `{rest}`")));
                }
            }
        }
        self.steps = aux.get("steps").map_or(0, |(_, d)| d[0] as usize);
        Ok(())
    }
}
