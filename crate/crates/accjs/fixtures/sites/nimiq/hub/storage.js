/* stand-in for https://hub.nimiq.com/js/storage.js */
(function () { self.loaded = (self.loaded || []).concat("https://hub.nimiq.com/js/storage.js"); })();
