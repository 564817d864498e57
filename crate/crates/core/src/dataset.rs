//! Dataset directories: stereo views as PPM, ground truth as PFM, occlusion
//! masks as PGM, indexed by a `manifest.json`.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/<name>_left.ppm   <dir>/<name>_right.ppm
//! <dir>/<name>_gt.pfm     (synthetic, val and test roles)
//! <dir>/<name>_occ.pgm    (255 = occluded)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{apply_degradation, generate_scene, DomainDegradation, SceneSpec};
use crate::eval::ValidityMask;
use crate::imgio::{read_pfm, read_pgm, read_pnm, write_pfm, write_pgm, write_ppm};
use crate::rng::Rng;
use crate::types::{DisparityMap, Image, StereoPair};
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Clean labeled pairs for supervised terms.
    Synthetic,
    /// Degraded unlabeled pairs for adaptation.
    Domain,
    /// Degraded pairs for model selection; ground truth kept for reporting.
    Val,
    /// Degraded held-out pairs with ground truth.
    Test,
}

impl Role {
    pub fn degraded(self) -> bool {
        self != Role::Synthetic
    }

    /// Whether ground-truth files are written for this role.
    pub fn stores_ground_truth(self) -> bool {
        self != Role::Domain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub left: String,
    pub right: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SceneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degradation: Option<DomainDegradation>,
    pub entries: Vec<ManifestEntry>,
}

/// One stereo pair with whatever labels are available.
///
/// `pair` is a synthetic pair for the synthetic role and a domain pair
/// otherwise; `ground_truth` is kept alongside for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub seed: Option<u64>,
    pub pair: StereoPair,
    pub ground_truth: Option<DisparityMap>,
    /// `true` where a left pixel has no right correspondence.
    pub occlusion: Option<ValidityMask>,
}

impl Sample {
    /// Pixels usable for disparity evaluation.
    pub fn eval_mask(&self) -> ValidityMask {
        let (h, w) = (self.pair.height(), self.pair.width());
        match &self.occlusion {
            Some(occ) => ValidityMask::from_fn(h, w, |y, x| !occ.get(y, x)),
            None => ValidityMask::all(h, w),
        }
    }
}

/// Generates `count` samples for `role` in memory; sample `i` uses seed `spec.seed + i`.
pub fn generate_samples(role: Role, count: usize, spec: &SceneSpec, deg: &DomainDegradation) -> Result<Vec<Sample>> {
    spec.validate()?;
    if role.degraded() {
        deg.validate()?;
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = spec.seed.wrapping_add(i as u64);
            let scene = generate_scene(&SceneSpec { seed, ..spec.clone() })?;
            let gt = scene.pair.ground_truth().cloned();
            let pair = if role.degraded() {
                let mut rng = Rng::new(seed ^ 0x005e_ed0f_de9a_da7e);
                let pair = apply_degradation(&scene.pair, deg, &mut rng)?;
                pair.with_views(quantize(pair.left())?, quantize(pair.right())?)?
            } else {
                scene.pair
            };
            Ok(Sample {
                name: format!("{i:06}"),
                seed: Some(seed),
                pair,
                ground_truth: gt,
                occlusion: Some(scene.occlusion),
            })
        })
        .collect()
}

/// Rounds to the 8-bit levels the view files store.
fn quantize(img: &Image) -> Result<Image> {
    let data = img.data().iter().map(|v| v.round().clamp(0.0, 255.0)).collect();
    Image::new(img.height(), img.width(), img.channels(), data)
}

fn mask_image(mask: &ValidityMask) -> Result<Image> {
    let data = mask.data().iter().map(|&m| if m { 255.0 } else { 0.0 }).collect();
    Image::new(mask.height(), mask.width(), 1, data)
}

fn image_mask(img: &Image, path: &Path) -> Result<ValidityMask> {
    if img.channels() != 1 {
        return Err(Error::format("PGM", path, "occlusion mask must be single-channel"));
    }
    ValidityMask::new(
        img.height(),
        img.width(),
        img.data().iter().map(|&v| v >= 128.0).collect(),
    )
}

/// Writes samples and a manifest into `dir`, creating it if needed.
pub fn write_dataset(
    dir: &Path,
    role: Role,
    samples: &[Sample],
    spec: Option<&SceneSpec>,
    deg: Option<&DomainDegradation>,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = samples
        .par_iter()
        .map(|s| {
            let file = |suffix: &str| format!("{}_{suffix}", s.name);
            let entry = ManifestEntry {
                name: s.name.clone(),
                seed: s.seed,
                left: file("left.ppm"),
                right: file("right.ppm"),
                ground_truth: (role.stores_ground_truth() && s.ground_truth.is_some()).then(|| file("gt.pfm")),
                occlusion: s.occlusion.as_ref().map(|_| file("occ.pgm")),
            };
            write_ppm(dir.join(&entry.left), s.pair.left())?;
            write_ppm(dir.join(&entry.right), s.pair.right())?;
            if let (Some(name), Some(gt)) = (&entry.ground_truth, &s.ground_truth) {
                write_pfm(dir.join(name), gt)?;
            }
            if let (Some(name), Some(occ)) = (&entry.occlusion, &s.occlusion) {
                write_pgm(dir.join(name), &mask_image(occ)?)?;
            }
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        role,
        spec: spec.cloned(),
        degradation: if role.degraded() { deg.cloned() } else { None },
        entries,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_entry(dir: &Path, role: Role, entry: &ManifestEntry) -> Result<Sample> {
    let left = read_pnm(dir.join(&entry.left))?;
    let right = read_pnm(dir.join(&entry.right))?;
    let ground_truth = entry.ground_truth.as_ref().map(|f| read_pfm(dir.join(f))).transpose()?;
    let occlusion = entry
        .occlusion
        .as_ref()
        .map(|f| {
            let p: PathBuf = dir.join(f);
            image_mask(&read_pgm(&p)?, &p)
        })
        .transpose()?;
    let pair = match (role, &ground_truth) {
        (Role::Synthetic, Some(gt)) => StereoPair::synthetic(left, right, gt.clone())?,
        (Role::Synthetic, None) => {
            return Err(Error::InvalidArgument(format!(
                "synthetic pair {} in {} has no ground truth",
                entry.name,
                dir.display()
            )))
        }
        _ => StereoPair::domain(left, right)?,
    };
    Ok(Sample {
        name: entry.name.clone(),
        seed: entry.seed,
        pair,
        ground_truth,
        occlusion,
    })
}

/// Reads every entry listed in `dir/manifest.json`.
pub fn load_dataset(dir: &Path) -> Result<(Manifest, Vec<Sample>)> {
    let manifest = read_manifest(dir)?;
    let samples = manifest
        .entries
        .par_iter()
        .map(|e| load_entry(dir, manifest.role, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Loads a dataset and checks it has the expected role.
pub fn load_role(dir: &Path, expected: &[Role]) -> Result<Vec<Sample>> {
    let (manifest, samples) = load_dataset(dir)?;
    if !expected.contains(&manifest.role) {
        return Err(Error::InvalidArgument(format!(
            "{} holds {:?} pairs, expected one of {expected:?}",
            dir.display(),
            manifest.role
        )));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SceneSpec {
        SceneSpec {
            height: 24,
            width: 32,
            num_shapes: 3,
            disp_range: [1.0, 6.0],
            texture_scale: 4.0,
            seed: 40,
        }
    }

    #[test]
    fn round_trip_all_roles() {
        let tmp = tempfile::tempdir().unwrap();
        for role in [Role::Synthetic, Role::Domain, Role::Val, Role::Test] {
            let dir = tmp.path().join(format!("{role:?}"));
            let samples = generate_samples(role, 3, &spec(), &DomainDegradation::default()).unwrap();
            let manifest =
                write_dataset(&dir, role, &samples, Some(&spec()), Some(&DomainDegradation::default())).unwrap();
            assert_eq!(manifest.entries.len(), 3);
            let (read, loaded) = load_dataset(&dir).unwrap();
            assert_eq!(read, manifest);
            for (a, b) in samples.iter().zip(&loaded) {
                assert_eq!(a.pair.left(), b.pair.left());
                assert_eq!(a.pair.right(), b.pair.right());
                assert_eq!(a.occlusion, b.occlusion);
                assert_eq!(b.pair.origin(), a.pair.origin());
                if role.stores_ground_truth() {
                    assert_eq!(a.ground_truth, b.ground_truth);
                } else {
                    assert!(b.ground_truth.is_none());
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_role_aware() {
        let a = generate_samples(Role::Val, 2, &spec(), &DomainDegradation::default()).unwrap();
        let b = generate_samples(Role::Val, 2, &spec(), &DomainDegradation::default()).unwrap();
        assert_eq!(a, b);
        assert!(a[0].pair.ground_truth().is_none());
        assert!(a[0].ground_truth.is_some());
        let s = generate_samples(Role::Synthetic, 1, &spec(), &DomainDegradation::default()).unwrap();
        assert!(s[0].pair.ground_truth().is_some());
    }

    #[test]
    fn manifest_is_strict() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join(MANIFEST), r#"{"role":"domain","entries":[],"extra":1}"#).unwrap();
        assert!(read_manifest(tmp.path()).is_err());
        assert!(read_manifest(&tmp.path().join("missing")).is_err());
        fs::write(tmp.path().join(MANIFEST), r#"{"role":"domain","entries":[]}"#).unwrap();
        assert!(load_role(tmp.path(), &[Role::Synthetic]).is_err());
        assert!(load_role(tmp.path(), &[Role::Domain]).unwrap().is_empty());
    }
}
