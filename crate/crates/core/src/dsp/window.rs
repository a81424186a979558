use serde::{Deserialize, Serialize};

use crate::model::{ClassLabel, ExperimentLog, FlagKind, ObstacleShape, Task, Terrain, Trace, TraceWindow};
use crate::scene::ObstacleKind;

use super::{align_log, process_batch, DspError, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkipReason {
    /// Not enough traces around the flag for a full window.
    DoesNotFit { label: ClassLabel, needed: usize, available: usize },
    /// The trial has no contact flag to anchor the window.
    NoFlag,
    /// The obstacle is not one of the shape classes.
    UnlabelledObstacle,
    /// A trace of the window failed preprocessing.
    Preprocessing { first_cycle: usize, error: String },
}

#[derive(Debug, Clone, Default)]
pub struct Windowing {
    pub windows: Vec<TraceWindow>,
    pub skipped: Vec<SkipReason>,
}

fn shape_label(kind: ObstacleKind) -> Option<ObstacleShape> {
    match kind {
        ObstacleKind::SemiCircle => Some(ObstacleShape::SemiCircle),
        ObstacleKind::Triangle => Some(ObstacleShape::Triangle),
        ObstacleKind::Rectangle => None,
    }
}

/// Cuts a trial into labelled windows.
///
/// Terrain: consecutive non-overlapping windows of aligned 2000-sample
/// traces, starting at the surface-change flag (at trace 0 on wood).
/// Obstacle shape: one window starting at most `pre_flag_traces` before the
/// contact flag, and one flat window ending `pre_flag_traces` before it.
pub fn make_windows(log: &ExperimentLog, task: Task, cfg: &PipelineConfig) -> Windowing {
    let mut out = Windowing::default();
    let aligned = align_log(log);
    let n = aligned.len();
    let flag_index = log.first_flag(FlagKind::ContactStart).map(|f| log.cycle_index_at(f.t_ex_ms).unwrap_or(n));

    let push = |out: &mut Windowing, start: usize, len: usize, label: ClassLabel, baselined: bool| {
        let slice = &aligned[start..start + len];
        let shifted: Result<Vec<Trace>, DspError> = slice.iter().cloned().collect();
        let traces = shifted.and_then(|t| if baselined { process_batch(&t, cfg) } else { Ok(t) });
        match traces.map(|t| TraceWindow::new(t, label, start)) {
            Ok(Ok(w)) => out.windows.push(w),
            Ok(Err(e)) => out.skipped.push(SkipReason::Preprocessing { first_cycle: start, error: e.to_string() }),
            Err(e) => out.skipped.push(SkipReason::Preprocessing { first_cycle: start, error: e.to_string() }),
        }
    };

    match task {
        Task::Terrain => {
            let material = log.scene.terrain.material;
            let label = ClassLabel::Terrain(material);
            let start = match (material, flag_index) {
                (Terrain::Wood, _) => 0,
                (_, Some(i)) => i,
                (_, None) => {
                    out.skipped.push(SkipReason::NoFlag);
                    return out;
                }
            };
            let size = cfg.terrain_window.max(1);
            let mut s = start;
            while s + size <= n {
                push(&mut out, s, size, label, false);
                s += size;
            }
            if s < n {
                out.skipped.push(SkipReason::DoesNotFit { label, needed: size, available: n - s });
            }
        }
        Task::ObstacleShape => {
            let Some(flag) = flag_index else {
                out.skipped.push(SkipReason::NoFlag);
                return out;
            };
            let size = cfg.obstacle_window;
            let lead = cfg.pre_flag_traces;
            match log.scene.obstacles.first().and_then(|o| shape_label(o.shape)) {
                Some(shape) => {
                    let label = ClassLabel::Obstacle(shape);
                    let start = flag.saturating_sub(lead);
                    if start + size <= n {
                        push(&mut out, start, size, label, true);
                    } else {
                        out.skipped.push(SkipReason::DoesNotFit { label, needed: size, available: n - start.min(n) });
                    }
                }
                None => out.skipped.push(SkipReason::UnlabelledObstacle),
            }
            let flat = ClassLabel::Obstacle(ObstacleShape::Flat);
            let end = flag.saturating_sub(lead);
            if end >= size {
                push(&mut out, end - size, size, flat, true);
            } else {
                out.skipped.push(SkipReason::DoesNotFit { label: flat, needed: size, available: end });
            }
        }
    }
    out
}
