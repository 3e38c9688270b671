//! Builds a model from the JSON model format and evaluates its frame data.
//!
//! Run with `cargo run --example model_from_json`.

use sr_curvature::model::{CovectorPoint, ModelFile, SubRiemannianModel};

const ENGEL_LIKE: &str = r#"{
  "name": "twisted-contact",
  "dim": 3,
  "horizontal_rank": 2,
  "frame": [["1", "0", "-x2/2"],
            ["0", "1", "x1/2 + x1^2"],
            ["0", "0", "1"]],
  "domain": [[-2, 2], [-2, 2], [-1e300, 1e300]]
}"#;

fn main() -> sr_curvature::Result<()> {
    let file: ModelFile = serde_json::from_str(ENGEL_LIKE).expect("valid JSON");
    let model = SubRiemannianModel::from_file(&file)?;
    model.validate_frame(16)?;

    let x = [0.3, -0.2, 1.0];
    println!("model {} (dim {}, rank {})", model.name, model.dim(), model.d1());
    println!("frame matrix at {x:?}:\n{}", model.frame_matrix(&x)?);

    // c^k_{ij} with [X_i, X_j] = c^k_{ij} X_k, stored as c[k*n*n + i*n + j]
    let c = model.structure_constants(&x)?;
    let n = model.dim();
    println!("[X_1, X_2] = {:?}", (0..n).map(|k| c[k * n * n + 1]).collect::<Vec<_>>());

    let p = CovectorPoint::new(x.to_vec(), vec![0.6, 0.8, 2.0]);
    println!("#p = {:?}, H(p) = {}", model.sharp(&p)?, model.hamiltonian(&p));
    Ok(())
}
