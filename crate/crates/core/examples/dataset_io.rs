//! Writing a generated dataset to CSV and reading it back.

use std::io::Cursor;

use langevin_dp::datagen::{draw_dataset, read_dataset, write_dataset, FeatureLaw, ModelKind, PopulationModel};
use langevin_dp::{Result, RngStream};

fn main() -> Result<()> {
    let model = PopulationModel::with_norm(
        ModelKind::Quadratic { noise: 0.2 },
        FeatureLaw::LowEffectiveRank,
        5,
        1.0,
    )?;
    let data = draw_dataset(&model, 4, &mut RngStream::new(11, 0))?;
    let mut buf = Vec::new();
    write_dataset(&data, model.kind().name(), &mut buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    let (back, kind) = read_dataset(Cursor::new(buf))?;
    assert_eq!(back, data);
    println!("read back {} examples of kind {kind}", back.len());
    Ok(())
}
