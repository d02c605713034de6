use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::sim::Observation;

/// Writes the depth image (millimetres, ASCII PGM) and the segmentation
/// image (per-key colours, ASCII PPM) of one step.
pub fn dump_frame(dir: &Path, step: u32, obs: &Observation) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let (w, h) = (obs.width, obs.height);
    let mut pgm = format!("P2\n{w} {h}\n65535\n");
    let mut ppm = format!("P3\n{w} {h}\n255\n");
    for v in 0..h {
        for u in 0..w {
            let k = v * w + u;
            let mm = (obs.depth[k].max(0.0) * 1000.0).round().min(65535.0) as u32;
            let _ = write!(pgm, "{mm} ");
            let key = obs.seg[k];
            let [r, g, b] = if key == 0 {
                [0, 0, 0]
            } else {
                let x = key.wrapping_mul(2654435761);
                [(x >> 16) as u8, (x >> 8) as u8, x as u8]
            };
            let _ = write!(ppm, "{r} {g} {b} ");
        }
        pgm.push('\n');
        ppm.push('\n');
    }
    fs::write(dir.join(format!("depth_{step:04}.pgm")), pgm)?;
    fs::write(dir.join(format!("seg_{step:04}.ppm")), ppm)
}
