use super::PipelineError;
use crate::geom::gfld::GfldArray;

/// Time-averaged WSS magnitude from an `n × 3 × T` series.
pub fn tawss(series: &GfldArray) -> Result<Vec<f64>, PipelineError> {
    match series.shape[..] {
        [n, 3, t] if t >= 1 => Ok((0..n)
            .map(|i| {
                let base = i * 3 * t;
                (0..t)
                    .map(|s| {
                        let c = |k: usize| series.data[base + k * t + s];
                        (c(0) * c(0) + c(1) * c(1) + c(2) * c(2)).sqrt()
                    })
                    .sum::<f64>()
                    / t as f64
            })
            .collect()),
        _ => Err(PipelineError::ShapeMismatch(format!(
            "WSS series must be n x 3 x T with T >= 1, got {:?}",
            series.shape
        ))),
    }
}

/// Class sizes for balanced tertiles with the remainder going to lower classes.
pub fn tertile_sizes(n: usize) -> [usize; 3] {
    let (base, rem) = (n / 3, n % 3);
    [base + usize::from(rem > 0), base + usize::from(rem > 1), base]
}

/// Rank-based low/mid/high labels (0/1/2). Ties are ranked by point index.
pub fn tertile_labels(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let [s0, s1, _] = tertile_sizes(n);
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = if rank < s0 {
            0
        } else if rank < s0 + s1 {
            1
        } else {
            2
        };
    }
    labels
}
