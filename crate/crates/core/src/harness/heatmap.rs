//! Channel-matrix heatmaps as binary PPM images.

use thiserror::Error;

use super::viridis::VIRIDIS;
use crate::leakage::ChannelMatrix;

/// Lowest probability distinguished on the log ramp; anything between 0
/// and this maps to the first non-zero colour.
pub const LOG_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeatmapError {
    #[error("channel matrix has no cells")]
    EmptyMatrix,
}

/// Ramp index for a probability: 0 for p = 0, then log-scaled so that
/// `LOG_FLOOR` maps to 1 and p = 1 to 255.
pub fn ramp_index(p: f64) -> usize {
    if p <= 0.0 {
        return 0;
    }
    let span = -LOG_FLOOR.log10();
    let x = ((p.min(1.0).log10() + span) / span).clamp(0.0, 1.0);
    1 + (x * 254.0).round() as usize
}

/// One pixel per cell: secrets left to right, time bins bottom to top.
pub fn render_heatmap(matrix: &ChannelMatrix) -> Result<Vec<u8>, HeatmapError> {
    let (w, h) = (matrix.secret_values.len(), matrix.time_bins.len());
    if w == 0 || h == 0 {
        return Err(HeatmapError::EmptyMatrix);
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for row in matrix.p.iter().rev() {
        for &p in row {
            out.extend_from_slice(&VIRIDIS[ramp_index(p)]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(p: Vec<Vec<f64>>) -> ChannelMatrix {
        ChannelMatrix {
            secret_values: (0..p[0].len() as u64).collect(),
            time_bins: (0..p.len() as u64).collect(),
            p,
        }
    }

    fn pixels(img: &[u8]) -> Vec<[u8; 3]> {
        let header_end = img
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .nth(2)
            .unwrap()
            .0
            + 1;
        img[header_end..]
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect()
    }

    #[test]
    fn single_certain_cell_is_brightest() {
        let img = render_heatmap(&matrix(vec![vec![1.0]])).unwrap();
        assert!(img.starts_with(b"P6\n1 1\n255\n"));
        assert_eq!(pixels(&img), vec![VIRIDIS[255]]);
    }

    #[test]
    fn identity_has_four_bright_pixels_on_the_anti_diagonal() {
        let p = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let px = pixels(&render_heatmap(&matrix(p)).unwrap());
        assert_eq!(px.iter().filter(|&&c| c == VIRIDIS[255]).count(), 4);
        assert_eq!(px.iter().filter(|&&c| c == VIRIDIS[0]).count(), 12);
        // Largest bin on top: top-left pixel is (secret 0, bin 3).
        assert_eq!(px[3], VIRIDIS[255]);
        assert_eq!(px[0], VIRIDIS[0]);
    }

    #[test]
    fn dimensions_follow_matrix() {
        let img = render_heatmap(&matrix(vec![vec![0.5; 3]; 2])).unwrap();
        assert!(img.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(pixels(&img).len(), 6);
    }

    #[test]
    fn ramp_is_monotone() {
        assert_eq!(ramp_index(0.0), 0);
        assert_eq!(ramp_index(LOG_FLOOR / 10.0), 1);
        assert_eq!(ramp_index(1.0), 255);
        let mut last = 0;
        for k in 0..=100 {
            let i = ramp_index(k as f64 / 100.0);
            assert!(i >= last);
            last = i;
        }
    }

    #[test]
    fn empty_matrix_rejected() {
        let m = ChannelMatrix {
            secret_values: vec![],
            time_bins: vec![],
            p: vec![],
        };
        assert_eq!(render_heatmap(&m), Err(HeatmapError::EmptyMatrix));
    }
}
