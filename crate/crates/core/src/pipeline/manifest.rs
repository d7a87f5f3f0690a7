use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Artery {
    LAD,
    LCX,
    RCA,
}

impl Artery {
    pub const ALL: [Artery; 3] = [Artery::LAD, Artery::LCX, Artery::RCA];

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self as usize] = 1.0;
        v
    }
}

/// An inlet or outlet: a boundary loop id (index into the descending-length
/// loop list), several loop ids, or explicit vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Boundary {
    Loop(usize),
    Loops { loops: Vec<usize> },
    Vertices { vertices: Vec<usize> },
}

impl Boundary {
    /// Vertex set given the mesh's boundary loops.
    pub fn vertices(&self, loops: &[Vec<usize>]) -> Result<Vec<usize>, PipelineError> {
        let lookup = |id: usize| {
            loops
                .get(id)
                .cloned()
                .ok_or_else(|| PipelineError::BadManifest(format!("boundary loop {id} does not exist ({} loops)", loops.len())))
        };
        let mut v = match self {
            Boundary::Loop(id) => lookup(*id)?,
            Boundary::Loops { loops: ids } => {
                let mut all = Vec::new();
                for &id in ids {
                    all.extend(lookup(id)?);
                }
                all
            }
            Boundary::Vertices { vertices } => vertices.clone(),
        };
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(PipelineError::BadManifest("empty boundary vertex set".into()));
        }
        Ok(v)
    }
}

/// One artery. Paths are relative to the manifest file unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub shape: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wss: Option<PathBuf>,
    pub patient: String,
    pub artery: Artery,
    pub waveform_mean: f64,
    pub waveform_std: f64,
    pub inlet: Boundary,
    pub outlet: Boundary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centerline: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleManifest {
    /// Directory that relative paths resolve against.
    pub root: PathBuf,
    pub samples: Vec<SampleRecord>,
}

impl SampleManifest {
    pub fn from_json(text: &str, root: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let samples: Vec<SampleRecord> = serde_json::from_str(text)?;
        let m = Self { root: root.into(), samples };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, root)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.samples).expect("manifest serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn patients(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.patient.clone()).collect()
    }

    /// Field sanity and file existence.
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.inlet == s.outlet {
                return Err(PipelineError::BadManifest(format!("sample {i}: inlet and outlet are the same")));
            }
            if !(s.waveform_mean.is_finite() && s.waveform_std.is_finite()) {
                return Err(PipelineError::BadManifest(format!("sample {i}: non-finite waveform statistics")));
            }
            let files = std::iter::once(&s.shape).chain(s.wss.iter()).chain(s.centerline.iter());
            for f in files {
                let full = self.resolve(f);
                if !full.is_file() {
                    return Err(PipelineError::BadManifest(format!("sample {i}: missing file {}", full.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECORD: &str = r#"[{"shape": "a.ply", "wss": "a.gfld", "patient": "p1", "artery": "LCX",
        "waveform_mean": 1.5, "waveform_std": 0.5, "inlet": 0, "outlet": {"loops": [1, 2]}}]"#;

    #[test]
    fn parses_and_checks_files() {
        let dir = tempfile::tempdir().unwrap();
        let err = SampleManifest::from_json(RECORD, dir.path()).unwrap_err();
        assert!(matches!(err, PipelineError::BadManifest(ref m) if m.contains("a.ply")));
        std::fs::write(dir.path().join("a.ply"), b"").unwrap();
        std::fs::write(dir.path().join("a.gfld"), b"").unwrap();
        let m = SampleManifest::from_json(RECORD, dir.path()).unwrap();
        assert_eq!(m.samples[0].artery, Artery::LCX);
        assert_eq!(m.samples[0].outlet, Boundary::Loops { loops: vec![1, 2] });
        assert!(m.samples[0].centerline.is_none());
        let again = SampleManifest::from_json(&m.to_json(), dir.path()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_bad_artery_and_equal_boundaries() {
        let bad = RECORD.replace("LCX", "LMA");
        assert!(matches!(SampleManifest::from_json(&bad, "."), Err(PipelineError::Json(_))));
        let same = RECORD.replace(r#"{"loops": [1, 2]}"#, "0");
        assert!(matches!(SampleManifest::from_json(&same, "."), Err(PipelineError::BadManifest(_))));
    }

    #[test]
    fn boundary_resolution() {
        let loops = vec![vec![4, 5, 6], vec![1, 2]];
        assert_eq!(Boundary::Loop(1).vertices(&loops).unwrap(), vec![1, 2]);
        assert_eq!(Boundary::Loops { loops: vec![1, 0] }.vertices(&loops).unwrap(), vec![1, 2, 4, 5, 6]);
        assert!(Boundary::Loop(2).vertices(&loops).is_err());
        assert_eq!(Boundary::Vertices { vertices: vec![9, 3, 9] }.vertices(&loops).unwrap(), vec![3, 9]);
    }

    #[test]
    fn one_hot_order() {
        assert_eq!(Artery::RCA.one_hot(), [0.0, 0.0, 1.0]);
    }
}
