use crate::error::{FormatError, Result};

/// Femtoseconds per picosecond.
pub const FS_PER_PS: i64 = 1_000;
/// Femtoseconds per second.
pub const FS_PER_S: f64 = 1e15;

/// Sorted timestamps (fs) recorded by one event timer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagStream {
    tags: Vec<i64>,
    resolution_fs: u64,
    site_id: u32,
    acquisition_span_fs: u64,
}

impl TagStream {
    /// Validates ordering, resolution and span.
    pub fn new(
        tags: Vec<i64>,
        resolution_fs: u64,
        site_id: u32,
        acquisition_span_fs: u64,
    ) -> Result<Self> {
        if resolution_fs == 0 {
            return Err(FormatError::ZeroResolution.into());
        }
        if let Some(i) = first_unsorted(&tags) {
            return Err(FormatError::Unsorted {
                index: i as u64,
                previous: tags[i - 1],
                current: tags[i],
            }
            .into());
        }
        let stream = TagStream {
            tags,
            resolution_fs,
            site_id,
            acquisition_span_fs,
        };
        let span = stream.tag_span();
        if span > acquisition_span_fs as u128 {
            return Err(FormatError::SpanExceeded {
                span,
                acquisition_span: acquisition_span_fs,
            }
            .into());
        }
        Ok(stream)
    }

    /// Builds a stream whose acquisition span is the tag extent.
    pub fn from_sorted(tags: Vec<i64>, resolution_fs: u64, site_id: u32) -> Result<Self> {
        let span = match (tags.first(), tags.last()) {
            (Some(&f), Some(&l)) => u64::try_from(l as i128 - f as i128).unwrap_or(u64::MAX),
            _ => 0,
        };
        Self::new(tags, resolution_fs, site_id, span)
    }

    pub fn tags(&self) -> &[i64] {
        &self.tags
    }

    pub fn into_tags(self) -> Vec<i64> {
        self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn resolution_fs(&self) -> u64 {
        self.resolution_fs
    }

    pub fn site_id(&self) -> u32 {
        self.site_id
    }

    pub fn acquisition_span_fs(&self) -> u64 {
        self.acquisition_span_fs
    }

    /// Last minus first tag, fs (0 when fewer than two tags).
    pub fn tag_span(&self) -> u128 {
        match (self.tags.first(), self.tags.last()) {
            (Some(&f), Some(&l)) => (l as i128 - f as i128) as u128,
            _ => 0,
        }
    }

    /// Mean count rate over the acquisition span, Hz.
    pub fn rate_hz(&self) -> f64 {
        if self.acquisition_span_fs == 0 {
            return 0.0;
        }
        self.tags.len() as f64 / (self.acquisition_span_fs as f64 / FS_PER_S)
    }
}

/// Index of the first tag smaller than its predecessor.
pub fn first_unsorted(tags: &[i64]) -> Option<usize> {
    tags.windows(2).position(|w| w[0] > w[1]).map(|i| i + 1)
}
