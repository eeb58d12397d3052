//! Report emission: one metrics row per split seed plus an arithmetic
//! mean row, and a short human-readable summary.

use std::path::PathBuf;

use crate::config::PipelineConfig;
use crate::error::CliError;

pub const METRIC_COLUMNS: &str =
    "seed,openness,T,|D_KUT|,cs_H,delta,auroc,kk_accuracy,mean_entropy_kut,mmd_kk_kut";

pub fn execute_report(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut lines: Vec<String> = Vec::new();
    for &seed_value in &cfg.run.seeds {
        let path = cfg
            .run
            .out_dir
            .join(format!("seed_{seed_value}"))
            .join("eval")
            .join("metrics_row.csv");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
        let mut it = text.lines();
        let header = it.next().unwrap_or_default();
        if header != METRIC_COLUMNS {
            return Err(CliError::runtime(format!(
                "unexpected metrics header in {}",
                path.display()
            )));
        }
        let row = it
            .next()
            .ok_or_else(|| CliError::runtime(format!("empty metrics row in {}", path.display())))?;
        let values: Vec<f64> = row
            .split(',')
            .map(|f| f.parse::<f64>().map_err(|_| CliError::runtime(format!("bad metric field {f:?}"))))
            .collect::<Result<_, _>>()?;
        lines.push(row.to_string());
        rows.push(values);
    }

    let n_cols = METRIC_COLUMNS.split(',').count();
    let mut mean = vec![0.0f64; n_cols];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= rows.len() as f64;
    }
    let mean_line = {
        let mut fields = vec!["mean".to_string()];
        fields.extend(mean.iter().skip(1).map(|v| v.to_string()));
        fields.join(",")
    };

    let mut csv = String::from(METRIC_COLUMNS);
    csv.push('\n');
    for l in &lines {
        csv.push_str(l);
        csv.push('\n');
    }
    csv.push_str(&mean_line);
    csv.push('\n');

    let report_dir = cfg.run.out_dir.join("report");
    std::fs::create_dir_all(&report_dir)?;
    let metrics_path = report_dir.join("metrics.csv");
    std::fs::write(&metrics_path, csv)?;

    let col = |name: &str| -> usize {
        METRIC_COLUMNS
            .split(',')
            .position(|c| c == name)
            .expect("known column")
    };
    let mut summary = String::new();
    summary.push_str("open-set recognition run summary\n");
    summary.push_str("================================\n");
    summary.push_str(&format!("seeds: {:?}\n", cfg.run.seeds));
    summary.push_str(&format!(
        "openness: {:.2}%\n",
        mean[col("openness")] * 100.0
    ));
    summary.push_str(&format!("mean threshold T: {:.4}\n", mean[col("T")]));
    summary.push_str(&format!("mean |D_KUT|: {:.1}\n", mean[col("|D_KUT|")]));
    summary.push_str(&format!("mean delta: {:.4}\n", mean[col("delta")]));
    summary.push_str(&format!(
        "mean detection AUROC: {:.2}%\n",
        mean[col("auroc")] * 100.0
    ));
    summary.push_str(&format!(
        "mean closed-set accuracy: {:.2}%\n",
        mean[col("kk_accuracy")] * 100.0
    ));
    summary.push_str(&format!(
        "mean admitted entropy: {:.4} bits\n",
        mean[col("mean_entropy_kut")]
    ));
    summary.push_str(&format!(
        "mean MMD(KK -> KUT): {:.4}\n",
        mean[col("mmd_kk_kut")]
    ));
    let summary_path = report_dir.join("summary.txt");
    std::fs::write(&summary_path, summary)?;

    Ok(vec![metrics_path, summary_path])
}
