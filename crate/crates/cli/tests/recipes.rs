//! Shipped recipes: regeneration of their image assets (ignored; run
//! explicitly after changing generators) and validation that every recipe
//! parses and references assets that exist.
//!
//! Asset PNGs are seeded noise, so regeneration is deterministic. The synth
//! endpoint pairs are built by rolling *before* quantization: a circular
//! integer translation is a pixel permutation and quantization is pointwise,
//! so the two operations commute and the decoded pair is still an exact
//! integer roll — which keeps the Fourier recipe's ground-truth path exactly
//! invariant even though the endpoints ship as PNGs.

use std::path::PathBuf;

use repgeo::images::pink_noise;
use repgeo::io::{read_png, write_png, BitDepth};
use repgeo::transforms::{apply, TransformSpec};

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
#[ignore = "writes into recipes/assets; run after changing the generators"]
fn regenerate_recipe_assets() {
    let assets = repo_root().join("recipes/assets");
    std::fs::create_dir_all(&assets).unwrap();

    let pink64 = pink_noise(64, 64, 0x5EED_64, 0);
    write_png(&assets.join("pink_64.png"), &pink64, BitDepth::Sixteen).unwrap();

    let x0 = pink_noise(32, 32, 0x5EED_32, 0);
    let x1 = apply(&TransformSpec::translate(8.0, 0.0), &x0, 1.0).unwrap();
    write_png(&assets.join("translate8_x0.png"), &x0, BitDepth::Sixteen).unwrap();
    write_png(&assets.join("translate8_x1.png"), &x1, BitDepth::Sixteen).unwrap();

    let y0 = pink_noise(24, 24, 0x5EED_24, 0);
    let y1 = apply(&TransformSpec::translate(4.0, 0.0), &y0, 1.0).unwrap();
    write_png(&assets.join("pair24_x0.png"), &y0, BitDepth::Sixteen).unwrap();
    write_png(&assets.join("pair24_x1.png"), &y1, BitDepth::Sixteen).unwrap();
}

#[test]
fn recipe_assets_exist_and_translation_pairs_are_exact_rolls() {
    let assets = repo_root().join("recipes/assets");
    for name in [
        "pink_64.png",
        "translate8_x0.png",
        "translate8_x1.png",
        "pair24_x0.png",
        "pair24_x1.png",
    ] {
        assert!(assets.join(name).is_file(), "missing asset {name}");
    }

    // Quantization and rolling commute, so the decoded pair must still be an
    // exact 8 px roll.
    let x0 = read_png(&assets.join("translate8_x0.png")).unwrap();
    let x1 = read_png(&assets.join("translate8_x1.png")).unwrap();
    let rolled = apply(&TransformSpec::translate(8.0, 0.0), &x0, 1.0).unwrap();
    assert_eq!(rolled.data(), x1.data());
}

#[test]
fn every_recipe_parses_and_references_existing_inputs() {
    let root = repo_root();
    let mut seen = 0;
    for entry in std::fs::read_dir(root.join("recipes")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        seen += 1;
        let text = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text)
            .unwrap_or_else(|e| panic!("{} is not valid JSON: {e}", path.display()));
        for key in ["input", "x0", "xn"] {
            if let Some(rel) = value.get(key).and_then(|v| v.as_str()) {
                assert!(
                    root.join(rel).is_file(),
                    "{} references missing {key} {rel}",
                    path.display()
                );
            }
        }
    }
    assert!(seen >= 5, "expected the shipped recipes, found {seen}");
}
