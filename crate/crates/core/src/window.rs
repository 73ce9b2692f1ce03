// SPDX-License-Identifier: Apache-2.0

//! Frame-token accounting on the coordinator.
//!
//! Frame `f` is complete once every display reported it. At session start
//! tokens `0..frames_in_flight` are issued; completing frame `f` issues the
//! token for `f + frames_in_flight`. Hence at any instant the newest issued
//! token is less than `lowest_incomplete + frames_in_flight`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Completion {
    /// Recorded; the frame still waits for `remaining` displays.
    Pending { remaining: usize },
    /// One or more frames completed; issue tokens for `admit`.
    Advanced {
        completed: Range<u32>,
        admit: Range<u32>,
    },
    /// This display already reported this frame (or the frame is done).
    Duplicate,
    /// A report for a frame that was never admitted.
    NotAdmitted,
    /// Display index outside the wall.
    UnknownDisplay,
}

#[derive(Clone, Debug)]
pub struct TokenWindow {
    frames_in_flight: u32,
    displays: usize,
    started: bool,
    next_token: u32,
    lowest_incomplete: u32,
    reports: BTreeMap<u32, Vec<bool>>,
}

impl TokenWindow {
    pub fn new(frames_in_flight: u32, displays: usize) -> Self {
        assert!(frames_in_flight >= 1, "frames_in_flight must be positive");
        TokenWindow {
            frames_in_flight,
            displays,
            started: false,
            next_token: 0,
            lowest_incomplete: 0,
            reports: BTreeMap::new(),
        }
    }

    pub fn frames_in_flight(&self) -> u32 {
        self.frames_in_flight
    }

    /// Tokens to pre-issue when the session starts. Empty on repeat calls.
    pub fn start(&mut self) -> Range<u32> {
        if self.started {
            return 0..0;
        }
        self.started = true;
        self.next_token = self.frames_in_flight;
        0..self.frames_in_flight
    }

    /// Number of tokens issued so far (= id of the next token).
    pub fn issued(&self) -> u32 {
        self.next_token
    }

    pub fn lowest_incomplete(&self) -> u32 {
        self.lowest_incomplete
    }

    pub fn report(&mut self, frame_id: u32, display_id: usize) -> Completion {
        if display_id >= self.displays {
            return Completion::UnknownDisplay;
        }
        if frame_id < self.lowest_incomplete {
            return Completion::Duplicate;
        }
        if frame_id >= self.next_token {
            return Completion::NotAdmitted;
        }
        let displays = self.displays;
        let seen = self
            .reports
            .entry(frame_id)
            .or_insert_with(|| vec![false; displays]);
        if seen[display_id] {
            return Completion::Duplicate;
        }
        seen[display_id] = true;

        let first = self.lowest_incomplete;
        while self
            .reports
            .get(&self.lowest_incomplete)
            .is_some_and(|s| s.iter().all(|&b| b))
        {
            self.reports.remove(&self.lowest_incomplete);
            self.lowest_incomplete += 1;
        }
        if self.lowest_incomplete == first {
            let remaining = self.reports[&first].iter().filter(|&&b| !b).count();
            return Completion::Pending { remaining };
        }
        let admit = self.next_token..self.lowest_incomplete + self.frames_in_flight;
        self.next_token = admit.end;
        Completion::Advanced {
            completed: first..self.lowest_incomplete,
            admit,
        }
    }
}
