//! The standard benchmark script: an orbit of ±20° around the condyle at 256×256.

use std::f64::consts::PI;

use super::sequence::{DegradationEvent, DegradationSpec, PhaseMark, SequenceScript, TrajectoryKnot};
use crate::memory::SurgicalPhase;

pub const STANDARD_FRAMES: usize = 500;
pub const STANDARD_SEEDS: [u64; 3] = [11, 23, 37];
/// Frames of the occlusion burst in the degraded script (inclusive).
pub const OCCLUSION_BURST: (usize, usize) = (120, 159);

const KNOT_SPACING: usize = 10;

/// Orbit knots every 10 frames: yaw ±20° over 500 frames, elevation ±6°, distance
/// 3 ± 0.25, a slight target drift and ±5° roll. Longer scripts repeat the motion.
fn orbit(frames: usize) -> Vec<TrajectoryKnot> {
    let mut knots = Vec::new();
    let mut t = 0;
    loop {
        let f = t as f64;
        let yaw = 20f64.to_radians() * (2.0 * PI * f / 500.0).sin();
        let elev = 6f64.to_radians() * (2.0 * PI * f / 333.0).sin();
        let d = 3.0 + 0.25 * (2.0 * PI * f / 400.0).sin();
        knots.push(TrajectoryKnot {
            frame: t,
            eye: [d * yaw.sin() * elev.cos(), d * elev.sin(), -d * yaw.cos() * elev.cos()],
            target: [
                0.06 * (2.0 * PI * f / 290.0).sin(),
                0.04 * (2.0 * PI * f / 210.0).cos(),
                0.0,
            ],
            roll_deg: 5.0 * (2.0 * PI * f / 450.0).sin(),
        });
        if t >= frames {
            break;
        }
        t += KNOT_SPACING;
    }
    knots
}

/// Exploration, tunnel positioning and drilling in 40 / 30 / 30 % of the frames
/// (phases that would start on the same frame collapse into the later one).
fn phases(frames: usize) -> Vec<PhaseMark> {
    let marks = [
        (0, SurgicalPhase::Exploration),
        (frames * 2 / 5, SurgicalPhase::TunnelPositioning),
        (frames * 7 / 10, SurgicalPhase::Drilling),
    ];
    let mut out: Vec<PhaseMark> = Vec::new();
    for (frame, phase) in marks {
        match out.last_mut() {
            Some(last) if last.frame == frame => last.phase = phase,
            _ => out.push(PhaseMark { frame, phase }),
        }
    }
    out[0].frame = 0;
    out
}

/// Occlusion burst (30 %, 40 frames), blur burst (20 frames), illumination ramp and
/// three 5-frame specular events. Positions and durations scale with the script length.
fn degradations(frames: usize) -> Vec<DegradationEvent> {
    let at = |f: usize| f * frames / STANDARD_FRAMES;
    let span = |start: usize, len: usize| (at(start), at(start) + (len * frames / STANDARD_FRAMES).max(1) - 1);
    let event = |(start, end): (usize, usize), spec| DegradationEvent {
        start,
        end: end.min(frames - 1),
        spec,
    };
    let mut d = vec![
        event(
            span(OCCLUSION_BURST.0, OCCLUSION_BURST.1 - OCCLUSION_BURST.0 + 1),
            DegradationSpec::Occluder {
                fraction: 0.3,
                gray: 128,
            },
        ),
        event(span(260, 20), DegradationSpec::Blur { half_width: 2 }),
        event(
            (at(300), frames - 1),
            DegradationSpec::Illumination {
                gain: 1.0,
                gain_end: Some(0.6),
            },
        ),
    ];
    for s in [60, 200, 380] {
        d.push(event(span(s, 5), DegradationSpec::Specular { count: 3, radius: 5.0 }));
    }
    d
}

pub fn standard_script(seed: u64, frames: usize, degraded: bool) -> SequenceScript {
    SequenceScript {
        mesh: None,
        resolution: [256, 256],
        frames,
        seed,
        trajectory: orbit(frames),
        phases: phases(frames),
        degradations: if degraded { degradations(frames) } else { vec![] },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_scripts_validate() {
        for degraded in [false, true] {
            for frames in [1, 2, 7, 30, STANDARD_FRAMES, 2000] {
                standard_script(1, frames, degraded).validate().unwrap();
            }
        }
        let s = standard_script(1, STANDARD_FRAMES, false);
        assert_eq!(s.phase_at(199), SurgicalPhase::Exploration);
        assert_eq!(s.phase_at(200), SurgicalPhase::TunnelPositioning);
        assert_eq!(s.phase_at(350), SurgicalPhase::Drilling);
        let d = standard_script(1, STANDARD_FRAMES, true);
        let occ = &d.degradations[0];
        assert_eq!((occ.start, occ.end), OCCLUSION_BURST);
        assert_eq!(standard_script(1, 1, false).phases.len(), 1);
    }
}
